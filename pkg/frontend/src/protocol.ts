/**
 * Planner wire protocol v1.
 *
 * Every request is {v: 1, id, kind, payload}; the response echoes the id.
 * Frame broadcasts carry no id and arrive interleaved on subscribed
 * transports. Over TCP each message is length-delimited: the payload byte
 * length in ASCII decimal, a newline, then the JSON bytes. The HTTP
 * gateway carries the same messages over POST /api/msg and SSE.
 */

export const PROTOCOL_VERSION = 1;

export type MessageKind =
  | "load"
  | "get_state"
  | "plan"
  | "propose"
  | "commit"
  | "set_theta"
  | "undo"
  | "subscribe_frames";

export interface RequestMessage {
  v: number;
  id: number;
  kind: MessageKind;
  payload: Record<string, unknown>;
}

export interface ErrorInfo {
  code: string;
  message: string;
  details: Record<string, unknown> & { current_version?: number };
}

export interface ResponseMessage {
  v: number;
  id: number;
  ok: boolean;
  payload?: Record<string, unknown>;
  error?: ErrorInfo;
}

/** [module_a, edge_a, module_b, edge_b] */
export type ConnectionSpec = [string, number, string, number];

/** [module_a, edge_a, module_b, edge_b, "tree" | "loop"] */
export type ConnectionRow = [string, number, string, number, string];

export interface PoseJson {
  yaw: number;
  x: number;
  y: number;
}

export interface ModuleSnapshot {
  id: string;
  sigma: number;
  theta: number;
  parity: number;
  a: number;
  theta_min: number;
  theta_max: number;
  pose: PoseJson;
  footprint: number[][];
  free_edges: number[];
}

export interface StateSnapshot {
  version: number;
  root: string;
  pending_orphan: string | null;
  modules: ModuleSnapshot[];
  connections: ConnectionRow[];
}

export interface MorphTargetPayload {
  module: string;
  theta_deg: number;
  order: number;
}

export interface MorphPivotOpPayload {
  new_con: ConnectionSpec;
  new_discon: ConnectionSpec;
  pre_morph: MorphTargetPayload[];
  post_morph: MorphTargetPayload[];
}

export interface DockingReportJson {
  pos_offset: number;
  ang_offset: number;
  passed: boolean;
}

export interface FrameModule {
  id: string;
  sigma: number;
  pose: PoseJson;
  footprint?: number[][];
}

export interface FrameMessage {
  v: number;
  kind: "frame";
  time: number;
  modules: FrameModule[];
  events: string[];
}

export function makeRequest(
  id: number,
  kind: MessageKind,
  payload: Record<string, unknown> = {}
): RequestMessage {
  return { v: PROTOCOL_VERSION, id, kind, payload };
}

/** Encode one message in the TCP length-delimited framing. */
export function encodeFrame(message: object): Uint8Array {
  const body = new TextEncoder().encode(JSON.stringify(message));
  const header = new TextEncoder().encode(`${body.length}\n`);
  const out = new Uint8Array(header.length + body.length);
  out.set(header, 0);
  out.set(body, header.length);
  return out;
}

/**
 * Incremental decoder for the length-delimited framing: feed raw chunks,
 * collect complete messages.
 */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  feed(chunk: Uint8Array): object[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;

    const messages: object[] = [];
    for (;;) {
      const nl = this.buffer.indexOf(0x0a);
      if (nl < 0) break;
      const length = parseInt(new TextDecoder().decode(this.buffer.slice(0, nl)), 10);
      if (!Number.isFinite(length) || length < 0) {
        throw new Error("bad frame length header");
      }
      if (this.buffer.length < nl + 1 + length) break;
      const body = this.buffer.slice(nl + 1, nl + 1 + length);
      this.buffer = this.buffer.slice(nl + 1 + length);
      messages.push(JSON.parse(new TextDecoder().decode(body)));
    }
    return messages;
  }
}

export function isFrameMessage(msg: object): msg is FrameMessage {
  return (msg as { kind?: string }).kind === "frame";
}
