/**
 * Mirrored session state plus UI-side selection.
 *
 * The view model stores only what the server sent: module polygons, sigma,
 * connections, version. It never computes kinematics; during animations
 * the footprints come straight from the frame broadcasts. Its version can
 * trail the server's (then the view is flagged stale) but never exceeds it.
 */

import {
  ConnectionRow,
  DockingReportJson,
  FrameMessage,
  ModuleSnapshot,
  StateSnapshot,
} from "./protocol.js";

export interface EdgePick {
  module: string;
  edge: number;
}

export interface Selection {
  edgePicks: EdgePick[];
  disconPick: ConnectionRow | null;
}

export class ViewModel {
  version = 0;
  serverVersion = 0;
  root: string | null = null;
  pendingOrphan: string | null = null;
  modules = new Map<string, ModuleSnapshot>();
  connections: ConnectionRow[] = [];
  selection: Selection = { edgePicks: [], disconPick: null };
  lastReport: DockingReportJson | null = null;
  pendingOpId: number | null = null;
  animating = false;

  get stale(): boolean {
    return this.version < this.serverVersion;
  }

  /** Replace the mirrored state with a fresh server snapshot. */
  applySnapshot(snapshot: StateSnapshot): void {
    this.version = snapshot.version;
    this.serverVersion = Math.max(this.serverVersion, snapshot.version);
    this.root = snapshot.root;
    this.pendingOrphan = snapshot.pending_orphan;
    this.modules = new Map(snapshot.modules.map((m) => [m.id, m]));
    this.connections = snapshot.connections.slice();
    this.animating = false;
    this.clearSelection();
  }

  /** Record that the server moved past us (e.g. a version conflict). */
  markStale(serverVersion: number): void {
    this.serverVersion = Math.max(this.serverVersion, serverVersion);
  }

  /** Animation update: positions and polygons only, no topology change. */
  applyFrame(frame: FrameMessage): void {
    this.animating = true;
    for (const mod of frame.modules) {
      const existing = this.modules.get(mod.id);
      if (!existing) continue;
      existing.sigma = mod.sigma;
      existing.pose = mod.pose;
      if (mod.footprint) {
        existing.footprint = mod.footprint;
      }
    }
  }

  clearSelection(): void {
    this.selection = { edgePicks: [], disconPick: null };
    this.pendingOpId = null;
  }

  isEdgeFree(module: string, edge: number): boolean {
    const m = this.modules.get(module);
    return m !== undefined && m.free_edges.includes(edge);
  }

  connectionBetween(a: string, b: string): ConnectionRow | null {
    for (const row of this.connections) {
      const [ma, , mb] = [row[0], row[1], row[2]];
      if ((ma === a && mb === b) || (ma === b && mb === a)) return row;
    }
    return null;
  }

  /** Midpoint of an edge from the server polygon (edge k runs vertex k to
   * vertex k+1, matching the module's own labeling). */
  edgeMidpoint(module: string, edge: number): [number, number] | null {
    const m = this.modules.get(module);
    if (!m) return null;
    const v0 = m.footprint[edge];
    const v1 = m.footprint[(edge + 1) % 4];
    return [(v0[0] + v1[0]) / 2, (v0[1] + v1[1]) / 2];
  }
}
