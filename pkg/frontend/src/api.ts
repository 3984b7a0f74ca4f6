// Thin client for the escalator HTTP API.

import type {
  EscalationView,
  FeedbackKind,
  ServiceConfig,
  TicketDetail,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async getEscalations(): Promise<EscalationView[]> {
    const body = await expectJson<{ escalations: EscalationView[] }>(
      await this.fetchFn(this.url('/escalations')),
    );
    return body.escalations;
  }

  async getTicket(ticketId: string): Promise<TicketDetail> {
    return expectJson<TicketDetail>(
      await this.fetchFn(this.url(`/tickets/${encodeURIComponent(ticketId)}`)),
    );
  }

  async getConfig(): Promise<ServiceConfig> {
    return expectJson<ServiceConfig>(await this.fetchFn(this.url('/config')));
  }

  async postFeedback(
    ticketId: string,
    kind: FeedbackKind,
    correctedCategory?: string,
  ): Promise<{ status: string; position: number }> {
    const payload: Record<string, unknown> = {
      ticket_id: ticketId,
      kind,
      timestamp: Date.now(),
    };
    if (correctedCategory !== undefined) payload.corrected_category = correctedCategory;
    return expectJson(
      await this.fetchFn(this.url('/feedback'), {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(payload),
      }),
    );
  }
}
