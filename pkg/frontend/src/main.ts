/**
 * Planner UI entry point.
 *
 * Click near a free edge to pick it (two picks form the new connection),
 * click a connection marker to choose the release, then Plan fills the
 * morph targets from the server, Propose dry-runs and Commit applies and
 * animates the streamed frames at wall-clock pace. Undo maps to server
 * undo. A version conflict refreshes the view and asks to re-propose.
 */

import { GatewayClient } from "./httpClient.js";
import { ConnectionRow, FrameMessage, StateSnapshot } from "./protocol.js";
import { Camera, buildScene, drawScene, fitCamera, unproject } from "./render.js";
import { ViewModel } from "./viewmodel.js";
import {
  buildOp,
  morphingModules,
  pickDisconnection,
  quantizeTheta,
  togglePickEdge,
} from "./authoring.js";

const vm = new ViewModel();
const client = new GatewayClient();
let camera: Camera = { scale: 500, offsetX: 100, offsetY: 400 };
let planThetas: Record<string, number> | null = null;
let frameQueue: FrameMessage[] = [];
let animTimer: number | null = null;

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusBox = document.getElementById("status")!;
const sliderBox = document.getElementById("sliders")!;
const connBox = document.getElementById("connections")!;

function note(text: string, bad = false): void {
  statusBox.textContent = text;
  statusBox.className = bad ? "bad" : "";
}

function redraw(): void {
  drawScene(ctx, buildScene(vm, camera), canvas.width, canvas.height);
}

async function refresh(): Promise<void> {
  const response = await client.request("get_state");
  if (!response.ok || !response.payload) {
    note(`get_state failed: ${response.error?.message}`, true);
    return;
  }
  vm.applySnapshot(response.payload as unknown as StateSnapshot);
  camera = fitCamera(vm, canvas.width, canvas.height);
  planThetas = null;
  rebuildSidebar();
  redraw();
}

function rebuildSidebar(): void {
  sliderBox.innerHTML = "";
  for (const [id, mod] of Array.from(vm.modules.entries()).sort()) {
    const row = document.createElement("div");
    row.className = "slider-row";
    const label = document.createElement("span");
    const thetaDeg = (mod.theta * 180) / Math.PI;
    label.textContent = `${id} ${thetaDeg.toFixed(1)} deg`;
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = String((mod.theta_min * 180) / Math.PI);
    slider.max = String((mod.theta_max * 180) / Math.PI);
    slider.step = "0.5";
    slider.value = String(quantizeTheta(thetaDeg));
    slider.addEventListener("change", async () => {
      const response = await client.request("set_theta", {
        module: id,
        theta_deg: quantizeTheta(parseFloat(slider.value)),
      });
      if (!response.ok) {
        note(`set_theta: ${response.error?.message}`, true);
      }
      await refresh();
    });
    row.append(label, slider);
    sliderBox.append(row);
  }
  connBox.innerHTML = "";
  for (const row of vm.connections) {
    const [ma, ea, mb, eb, kind] = row;
    const button = document.createElement("button");
    button.textContent = `${ma}.E${ea} - ${mb}.E${eb} (${kind})`;
    button.addEventListener("click", () => {
      const result = pickDisconnection(vm, row as ConnectionRow);
      note(result.ok ? `release ${ma}-${mb}` : result.reason, !result.ok);
      redraw();
    });
    connBox.append(button);
  }
}

canvas.addEventListener("click", (event) => {
  const rect = canvas.getBoundingClientRect();
  const world = unproject(camera, event.clientX - rect.left, event.clientY - rect.top);
  let best: { module: string; edge: number; d: number } | null = null;
  for (const id of vm.modules.keys()) {
    for (let k = 0; k < 4; k++) {
      const mid = vm.edgeMidpoint(id, k);
      if (!mid) continue;
      const d = Math.hypot(mid[0] - world[0], mid[1] - world[1]);
      if (!best || d < best.d) best = { module: id, edge: k, d };
    }
  }
  if (!best || best.d * camera.scale > 25) return;
  const result = togglePickEdge(vm, { module: best.module, edge: best.edge });
  note(
    result.ok
      ? `picked ${best.module}.E${best.edge}`
      : `refused: ${result.reason}`,
    !result.ok
  );
  planThetas = null;
  redraw();
});

async function doPlan(): Promise<void> {
  if (vm.selection.edgePicks.length !== 2) {
    note("pick two free edges first", true);
    return;
  }
  const [p0, p1] = vm.selection.edgePicks;
  const morphing = morphingModules(vm, p0.module, p1.module);
  const response = await client.request("plan", {
    new_con: [p0.module, p0.edge, p1.module, p1.edge],
    morphing,
  });
  if (!response.ok || !response.payload) {
    note(`infeasible: ${response.error?.message}`, true);
    return;
  }
  planThetas = response.payload.thetas_deg as Record<string, number>;
  note(
    "targets " +
      Object.entries(planThetas)
        .map(([m, t]) => `${m}:${t.toFixed(2)}`)
        .join(" ")
  );
}

async function doPropose(): Promise<void> {
  if (!planThetas) await doPlan();
  if (!planThetas || !vm.selection.disconPick) {
    note("need a plan and a connection to release", true);
    return;
  }
  const op = buildOp(vm, { planThetasDeg: planThetas });
  const response = await client.request("propose", { version: vm.version, op });
  if (!response.ok) {
    if (response.error?.code === "conflict") {
      vm.markStale(response.error.details.current_version ?? vm.version + 1);
      redraw();
      note("state moved - refreshed, please re-propose", true);
      await refresh();
    } else {
      note(`propose failed: ${response.error?.message}`, true);
    }
    return;
  }
  const payload = response.payload!;
  vm.lastReport = (payload.report ?? null) as ViewModel["lastReport"];
  if (!payload.accepted) {
    note(`dry run failed: ${payload.error}`, true);
    redraw();
    return;
  }
  vm.pendingOpId = payload.op_id as number;
  note(`proposal ${vm.pendingOpId} ready - docking passes`);
  redraw();
}

async function doCommit(): Promise<void> {
  if (vm.pendingOpId === null) {
    note("propose first", true);
    return;
  }
  const response = await client.request("commit", { op_id: vm.pendingOpId });
  if (!response.ok) {
    if (response.error?.code === "conflict") {
      vm.markStale(response.error.details.current_version ?? vm.version + 1);
      redraw();
      note("commit conflict - refreshed, please re-propose", true);
      await refresh();
    } else {
      note(`commit failed: ${response.error?.message}`, true);
    }
    return;
  }
  note(`committed, now at version ${(response.payload as { version: number }).version}`);
}

function pumpFrames(): void {
  if (animTimer !== null) return;
  const step = () => {
    const frame = frameQueue.shift();
    if (!frame) {
      animTimer = null;
      void refresh();
      return;
    }
    vm.applyFrame(frame);
    redraw();
    const wait =
      frameQueue.length > 0
        ? Math.max(10, (frameQueue[0].time - frame.time) * 1000)
        : 10;
    animTimer = window.setTimeout(step, wait);
  };
  animTimer = window.setTimeout(step, 0);
}

async function boot(): Promise<void> {
  client.subscribeFrames((frame) => {
    frameQueue.push(frame);
    pumpFrames();
  });
  document.getElementById("plan")!.addEventListener("click", () => void doPlan());
  document.getElementById("propose")!.addEventListener("click", () => void doPropose());
  document.getElementById("commit")!.addEventListener("click", () => void doCommit());
  document.getElementById("undo")!.addEventListener("click", async () => {
    const response = await client.request("undo");
    note(response.ok ? "undone" : `undo: ${response.error?.message}`, !response.ok);
    await refresh();
  });
  document.getElementById("refresh")!.addEventListener("click", () => void refresh());
  const fileInput = document.getElementById("scenario-file") as HTMLInputElement;
  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const text = await file.text();
    const response = await client.request("load", { scenario: text });
    note(response.ok ? "scenario loaded" : `load: ${response.error?.message}`, !response.ok);
    await refresh();
  });
  await refresh().catch(() => note("no scenario loaded yet - use Load", true));
}

void boot();
