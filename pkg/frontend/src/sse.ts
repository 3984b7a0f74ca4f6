// Minimal server-sent-events client over fetch streaming, so the same code
// runs in the browser and in Node-based tests. Reconnects with exponential
// backoff and tells the caller about connection state, which drives the
// stale indicator and the backfill-on-reconnect.

export interface StreamHandlers {
  onEvent: (type: string, data: unknown) => void;
  onConnect?: () => void;
  onDisconnect?: () => void;
}

export interface Subscription {
  close: () => void;
}

/** Incremental parser for one SSE byte stream. Feed it text chunks. */
export class SseParser {
  private buffer = '';
  private eventType: string | null = null;

  constructor(private readonly emit: (type: string, data: unknown) => void) {}

  feed(chunk: string): void {
    this.buffer += chunk;
    let newline = this.buffer.indexOf('\n');
    while (newline >= 0) {
      const line = this.buffer.slice(0, newline).replace(/\r$/, '');
      this.buffer = this.buffer.slice(newline + 1);
      this.handleLine(line);
      newline = this.buffer.indexOf('\n');
    }
  }

  private handleLine(line: string): void {
    if (line === '' || line.startsWith(':') || line.startsWith('retry:')) {
      return; // separators, keep-alives, retry hints
    }
    if (line.startsWith('event: ')) {
      this.eventType = line.slice('event: '.length);
      return;
    }
    if (line.startsWith('data: ') && this.eventType !== null) {
      const type = this.eventType;
      this.eventType = null;
      try {
        this.emit(type, JSON.parse(line.slice('data: '.length)));
      } catch {
        // Broken payloads are dropped; the stream itself stays up.
      }
    }
  }
}

const INITIAL_BACKOFF_MS = 500;
const MAX_BACKOFF_MS = 10_000;

export function subscribeStream(
  url: string,
  handlers: StreamHandlers,
  fetchFn: typeof fetch = fetch,
): Subscription {
  let closed = false;
  let controller = new AbortController();
  let backoff = INITIAL_BACKOFF_MS;

  const run = async (): Promise<void> => {
    while (!closed) {
      controller = new AbortController();
      try {
        const response = await fetchFn(url, {
          signal: controller.signal,
          headers: { Accept: 'text/event-stream' },
        });
        if (!response.ok || response.body === null) {
          throw new Error(`stream returned ${response.status}`);
        }
        backoff = INITIAL_BACKOFF_MS;
        handlers.onConnect?.();
        const parser = new SseParser(handlers.onEvent);
        const decoder = new TextDecoder();
        const reader = response.body.getReader();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          parser.feed(decoder.decode(value, { stream: true }));
        }
      } catch {
        // fall through to reconnect
      }
      if (closed) return;
      handlers.onDisconnect?.();
      await new Promise((resolve) => setTimeout(resolve, backoff));
      backoff = Math.min(backoff * 2, MAX_BACKOFF_MS);
    }
  };

  void run();
  return {
    close: () => {
      closed = true;
      controller.abort();
    },
  };
}
