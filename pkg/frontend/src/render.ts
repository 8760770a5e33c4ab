/**
 * Scene building and canvas drawing.
 *
 * Every polygon drawn comes verbatim from the server (snapshot footprints
 * or frame broadcasts), pushed through the viewport transform; the client
 * adds no geometry of its own. `buildScene` is pure so headless tests can
 * assert the rendered polygon set against the server state.
 */

import { ViewModel } from "./viewmodel.js";

export interface Camera {
  /** canvas pixels per meter */
  scale: number;
  /** world origin in canvas pixels */
  offsetX: number;
  offsetY: number;
}

export interface ScenePolygon {
  id: string;
  points: [number, number][];
  fill: string;
  stroke: string;
  dashed: boolean;
}

export interface SceneLabel {
  text: string;
  at: [number, number];
  size: number;
  color: string;
}

export interface SceneMarker {
  at: [number, number];
  kind: "tree" | "loop" | "pick" | "root";
}

export interface Scene {
  polygons: ScenePolygon[];
  labels: SceneLabel[];
  markers: SceneMarker[];
  staleBadge: boolean;
  hud: string[];
}

const FILL = "#cfe3f5";
const FILL_SELECTED = "#9cc6ee";
const FILL_ORPHAN = "#f5d4cf";
const STROKE = "#1f3a5f";

/** World (meters, y up) to canvas pixels (y down). */
export function project(camera: Camera, point: [number, number] | number[]): [number, number] {
  return [
    camera.offsetX + point[0] * camera.scale,
    camera.offsetY - point[1] * camera.scale,
  ];
}

export function unproject(camera: Camera, px: number, py: number): [number, number] {
  return [(px - camera.offsetX) / camera.scale, (camera.offsetY - py) / camera.scale];
}

/** Fit all module polygons into the canvas with a margin. */
export function fitCamera(vm: ViewModel, width: number, height: number, margin = 40): Camera {
  let xmin = Infinity;
  let xmax = -Infinity;
  let ymin = Infinity;
  let ymax = -Infinity;
  for (const m of vm.modules.values()) {
    for (const [x, y] of m.footprint) {
      xmin = Math.min(xmin, x);
      xmax = Math.max(xmax, x);
      ymin = Math.min(ymin, y);
      ymax = Math.max(ymax, y);
    }
  }
  if (!Number.isFinite(xmin)) {
    return { scale: 500, offsetX: width / 2, offsetY: height / 2 };
  }
  const spanX = Math.max(xmax - xmin, 1e-6);
  const spanY = Math.max(ymax - ymin, 1e-6);
  const scale = Math.min(
    (width - 2 * margin) / spanX,
    (height - 2 * margin) / spanY
  );
  return {
    scale,
    offsetX: margin - xmin * scale + (width - 2 * margin - spanX * scale) / 2,
    offsetY: height - margin + ymin * scale - (height - 2 * margin - spanY * scale) / 2,
  };
}

function moduleFill(vm: ViewModel, id: string): string {
  if (id === vm.pendingOrphan) return FILL_ORPHAN;
  const picked = vm.selection.edgePicks.some((p) => p.module === id);
  return picked ? FILL_SELECTED : FILL;
}

/** Build the drawable scene for the current view model. */
export function buildScene(vm: ViewModel, camera: Camera): Scene {
  const scene: Scene = {
    polygons: [],
    labels: [],
    markers: [],
    staleBadge: vm.stale,
    hud: [],
  };
  const ids = Array.from(vm.modules.keys()).sort();
  for (const id of ids) {
    const m = vm.modules.get(id)!;
    const pts = m.footprint.map((v) => project(camera, v));
    scene.polygons.push({
      id,
      points: pts,
      fill: moduleFill(vm, id),
      stroke: STROKE,
      dashed: id === vm.pendingOrphan,
    });
    const cx = m.footprint.reduce((s, v) => s + v[0], 0) / m.footprint.length;
    const cy = m.footprint.reduce((s, v) => s + v[1], 0) / m.footprint.length;
    scene.labels.push({
      text: id === vm.root ? `${id}*` : id,
      at: project(camera, [cx, cy]),
      size: 13,
      color: "#000",
    });
    for (let k = 0; k < 4; k++) {
      const mid = vm.edgeMidpoint(id, k)!;
      const inward: [number, number] = [
        mid[0] + (cx - mid[0]) * 0.3,
        mid[1] + (cy - mid[1]) * 0.3,
      ];
      scene.labels.push({
        text: `E${k}`,
        at: project(camera, inward),
        size: 9,
        color: "#555",
      });
    }
  }
  for (const [ma, ea, , , kind] of vm.connections) {
    const mid = vm.edgeMidpoint(ma, ea);
    if (mid) {
      scene.markers.push({
        at: project(camera, mid),
        kind: kind === "tree" ? "tree" : "loop",
      });
    }
  }
  for (const pick of vm.selection.edgePicks) {
    const mid = vm.edgeMidpoint(pick.module, pick.edge);
    if (mid) scene.markers.push({ at: project(camera, mid), kind: "pick" });
  }
  if (vm.lastReport) {
    const mm = (vm.lastReport.pos_offset * 1000).toFixed(3);
    const deg = ((vm.lastReport.ang_offset * 180) / Math.PI).toFixed(3);
    scene.hud.push(
      `docking offset ${mm} mm / ${deg} deg ` +
        (vm.lastReport.passed ? "(pass)" : "(FAIL)")
    );
  }
  scene.hud.push(`version ${vm.version}${vm.stale ? " (stale)" : ""}`);
  return scene;
}

/** Paint a scene onto a 2D canvas context (browser only). */
export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene, width: number, height: number): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, width, height);
  for (const poly of scene.polygons) {
    ctx.beginPath();
    poly.points.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
    ctx.closePath();
    ctx.fillStyle = poly.fill;
    ctx.fill();
    ctx.setLineDash(poly.dashed ? [6, 4] : []);
    ctx.strokeStyle = poly.stroke;
    ctx.lineWidth = 2;
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const marker of scene.markers) {
    ctx.beginPath();
    ctx.arc(marker.at[0], marker.at[1], marker.kind === "pick" ? 7 : 4.5, 0, 2 * Math.PI);
    if (marker.kind === "tree") {
      ctx.fillStyle = "#0a7d32";
      ctx.fill();
    } else if (marker.kind === "loop") {
      ctx.strokeStyle = "#c06014";
      ctx.lineWidth = 2;
      ctx.stroke();
    } else {
      ctx.strokeStyle = "#d62718";
      ctx.lineWidth = 3;
      ctx.stroke();
    }
  }
  for (const label of scene.labels) {
    ctx.fillStyle = label.color;
    ctx.font = `${label.size}px monospace`;
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(label.text, label.at[0], label.at[1]);
  }
  ctx.textAlign = "left";
  ctx.fillStyle = scene.staleBadge ? "#d62718" : "#333";
  ctx.font = "13px monospace";
  scene.hud.forEach((line, i) => ctx.fillText(line, 10, 18 + 16 * i));
  if (scene.staleBadge) {
    ctx.fillText("state is stale - refresh", 10, 18 + 16 * scene.hud.length);
  }
}
