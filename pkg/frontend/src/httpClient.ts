/**
 * Browser transport: protocol messages over the HTTP gateway.
 *
 * Requests go through POST /api/msg; frame broadcasts arrive on the
 * server-sent-event stream at /api/frames.
 */

import {
  FrameMessage,
  MessageKind,
  RequestMessage,
  ResponseMessage,
  isFrameMessage,
  makeRequest,
} from "./protocol.js";

export class GatewayClient {
  private nextId = 1;

  constructor(private base: string = "") {}

  async request(
    kind: MessageKind,
    payload: Record<string, unknown> = {}
  ): Promise<ResponseMessage> {
    const msg: RequestMessage = makeRequest(this.nextId++, kind, payload);
    const response = await fetch(`${this.base}/api/msg`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(msg),
    });
    if (!response.ok) {
      throw new Error(`gateway error ${response.status}`);
    }
    return (await response.json()) as ResponseMessage;
  }

  /**
   * Subscribe to frame broadcasts. Returns a stop function. Uses a raw
   * fetch stream so it works without the EventSource global.
   */
  subscribeFrames(onFrame: (frame: FrameMessage) => void): () => void {
    const controller = new AbortController();
    (async () => {
      try {
        const response = await fetch(`${this.base}/api/frames`, {
          signal: controller.signal,
        });
        const reader = response.body?.getReader();
        if (!reader) return;
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let idx: number;
          while ((idx = buffer.indexOf("\n\n")) >= 0) {
            const chunk = buffer.slice(0, idx);
            buffer = buffer.slice(idx + 2);
            for (const line of chunk.split("\n")) {
              if (!line.startsWith("data: ")) continue;
              const parsed = JSON.parse(line.slice(6)) as object;
              if (isFrameMessage(parsed)) onFrame(parsed);
            }
          }
        }
      } catch {
        // aborted or connection dropped; the UI resubscribes on demand
      }
    })();
    return () => controller.abort();
  }
}
