/**
 * Morphpivot drafting from user picks.
 *
 * A draft needs two free edges on distinct modules (the new connection)
 * and one existing connection (the release). Occupied edges are refused at
 * pick time; the pre-morph targets come from the server's alignment
 * planning, the post-morph restores the current folding angles. Slider and
 * target angles are quantized to half a degree.
 */

import {
  ConnectionRow,
  ConnectionSpec,
  MorphPivotOpPayload,
  MorphTargetPayload,
} from "./protocol.js";
import { EdgePick, ViewModel } from "./viewmodel.js";

export const THETA_STEP_DEG = 0.5;

export function quantizeTheta(thetaDeg: number): number {
  return Math.round(thetaDeg / THETA_STEP_DEG) * THETA_STEP_DEG;
}

export type PickResult =
  | { ok: true }
  | { ok: false; reason: string };

/** Toggle an edge pick; refuses occupied edges and same-module pairs. */
export function togglePickEdge(vm: ViewModel, pick: EdgePick): PickResult {
  const existing = vm.selection.edgePicks.findIndex(
    (p) => p.module === pick.module && p.edge === pick.edge
  );
  if (existing >= 0) {
    vm.selection.edgePicks.splice(existing, 1);
    return { ok: true };
  }
  if (!vm.modules.has(pick.module)) {
    return { ok: false, reason: `unknown module ${pick.module}` };
  }
  if (!vm.isEdgeFree(pick.module, pick.edge)) {
    return { ok: false, reason: `${pick.module}.E${pick.edge} is occupied` };
  }
  if (vm.selection.edgePicks.some((p) => p.module === pick.module)) {
    return { ok: false, reason: "both edges are on the same module" };
  }
  if (vm.selection.edgePicks.length >= 2) {
    return { ok: false, reason: "two edges already picked" };
  }
  vm.selection.edgePicks.push(pick);
  return { ok: true };
}

export function pickDisconnection(vm: ViewModel, row: ConnectionRow): PickResult {
  const found = vm.connections.some(
    (c) => c[0] === row[0] && c[1] === row[1] && c[2] === row[2] && c[3] === row[3]
  );
  if (!found) {
    return { ok: false, reason: "no such connection" };
  }
  vm.selection.disconPick = row;
  return { ok: true };
}

/** Modules whose folding angle must morph for the picked connection: the
 * cycle the new edge closes, i.e. the tree path between the two modules. */
export function morphingModules(vm: ViewModel, a: string, b: string): string[] {
  const parents = new Map<string, string>();
  for (const [ma, , mb, , kind] of vm.connections) {
    if (kind !== "tree") continue;
    // tree rows are (parent, parent_edge, child, 0)
    parents.set(mb, ma);
  }
  const chain = (start: string): string[] => {
    const out = [start];
    let cur = start;
    while (parents.has(cur)) {
      cur = parents.get(cur)!;
      out.push(cur);
    }
    return out;
  };
  const fromA = chain(a);
  const fromB = chain(b);
  const inB = new Set(fromB);
  const junction = fromA.find((m) => inB.has(m));
  const path = [
    ...fromA.slice(0, fromA.indexOf(junction!) + 1),
    ...fromB.slice(0, fromB.indexOf(junction!)).reverse(),
  ];
  return path.sort();
}

export interface DraftInputs {
  planThetasDeg: Record<string, number>;
}

/** Build the operation payload from the current picks. */
export function buildOp(vm: ViewModel, inputs: DraftInputs): MorphPivotOpPayload {
  if (vm.selection.edgePicks.length !== 2) {
    throw new Error("a draft needs exactly two picked edges");
  }
  if (!vm.selection.disconPick) {
    throw new Error("a draft needs a connection to release");
  }
  const [p0, p1] = vm.selection.edgePicks;
  const newCon: ConnectionSpec = [p0.module, p0.edge, p1.module, p1.edge];
  const d = vm.selection.disconPick;
  const newDiscon: ConnectionSpec = [d[0], d[1], d[2], d[3]];
  const order = Object.keys(inputs.planThetasDeg).sort();
  const pre: MorphTargetPayload[] = order.map((module, i) => ({
    module,
    theta_deg: inputs.planThetasDeg[module],
    order: i,
  }));
  const post: MorphTargetPayload[] = order.map((module, i) => ({
    module,
    theta_deg: quantizeTheta((vm.modules.get(module)!.theta * 180) / Math.PI),
    order: i,
  }));
  return { new_con: newCon, new_discon: newDiscon, pre_morph: pre, post_morph: post };
}
