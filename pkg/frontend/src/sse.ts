// Minimal SSE reader over fetch streaming. Works in the browser and in Node
// (both expose WHATWG streams on Response.body), so the same code path is
// exercised by the test suite and the live view.

export interface SseEvent {
  event: string;
  data: unknown;
}

export async function* sseStream(url: string, signal?: AbortSignal): AsyncGenerator<SseEvent> {
  const resp = await fetch(url, { headers: { accept: "text/event-stream" }, signal });
  if (!resp.ok || !resp.body) {
    throw new Error(`SSE connect failed: ${resp.status}`);
  }
  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  let eventName = "message";
  let dataLines: string[] = [];
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let newline;
      while ((newline = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, newline).replace(/\r$/, "");
        buffer = buffer.slice(newline + 1);
        if (line === "") {
          if (dataLines.length > 0) {
            yield { event: eventName, data: JSON.parse(dataLines.join("\n")) };
          }
          eventName = "message";
          dataLines = [];
        } else if (line.startsWith("event: ")) {
          eventName = line.slice("event: ".length);
        } else if (line.startsWith("data: ")) {
          dataLines.push(line.slice("data: ".length));
        }
        // lines starting with ':' are keepalive comments; ignored
      }
    }
  } finally {
    reader.releaseLock();
  }
}
