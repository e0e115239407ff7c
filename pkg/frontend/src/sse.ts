// Minimal server-sent-events reader over fetch streaming. Works in any
// runtime with fetch + ReadableStream (browsers, node 18+), which keeps the
// client testable outside a browser.

export interface SSEHandle {
  close(): void;
  done: Promise<void>;
}

/** Incremental parser: feed raw text chunks, get back `data:` payloads. */
export class SSEParser {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const events: string[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 2);
      const data = block
        .split("\n")
        .filter((line) => line.startsWith("data:"))
        .map((line) => line.slice(5).trimStart())
        .join("\n");
      if (data.length > 0) events.push(data);
    }
    return events;
  }
}

export function subscribe(
  url: string,
  onEvent: (data: string) => void,
  onError: (err: unknown) => void,
): SSEHandle {
  const controller = new AbortController();
  const done = (async () => {
    const response = await fetch(url, {
      signal: controller.signal,
      headers: { accept: "text/event-stream" },
    });
    if (!response.ok || response.body === null) {
      throw new Error(`event stream failed: ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SSEParser();
    for (;;) {
      const { done: finished, value } = await reader.read();
      if (finished) break;
      for (const data of parser.push(decoder.decode(value, { stream: true }))) {
        onEvent(data);
      }
    }
  })().catch((err) => {
    if (!controller.signal.aborted) onError(err);
  });
  return { close: () => controller.abort(), done };
}
