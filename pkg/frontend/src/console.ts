// Console controller: glues the feed store to the service API. The three
// operations mirror what an analyst can do — watch the feed, vote on an
// alert, and open a ticket (which records the indirect join signal once
// per session).

import { ApiError } from './api.js';
import type { ApiClient } from './api.js';
import { FeedStore } from './feed.js';
import { subscribeStream } from './sse.js';
import type { Subscription } from './sse.js';
import type { AlertNotification, GroupUpdate, TicketDetail } from './types.js';

export type DetailResult =
  | { kind: 'found'; detail: TicketDetail }
  | { kind: 'not-found'; ticketId: string };

export class ConsoleController {
  constructor(
    readonly api: ApiClient,
    readonly store: FeedStore,
    private readonly streamUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  /** Start the live feed; every (re)connect backfills from /escalations. */
  subscribe(): Subscription {
    return subscribeStream(
      this.streamUrl,
      {
        onEvent: (type, data) => {
          if (type === 'alert') this.store.handleAlert(data as AlertNotification);
          else if (type === 'group') this.store.handleGroup(data as GroupUpdate);
        },
        onConnect: () => {
          this.store.setConnected(true);
          void this.api
            .getEscalations()
            .then((escalations) => this.store.backfill(escalations))
            .catch(() => {
              // Missed-alert recovery retries on the next reconnect.
            });
        },
        onDisconnect: () => this.store.setConnected(false),
      },
      this.fetchFn,
    );
  }

  /** Cast a vote; the card only shows the vote once the service acked it. */
  async vote(ticketId: string, kind: 'Upvote' | 'Downvote', correctedCategory?: string): Promise<void> {
    this.store.voteRequested(ticketId);
    try {
      await this.api.postFeedback(ticketId, kind, correctedCategory);
      this.store.voteAcknowledged(ticketId, kind, correctedCategory ?? null);
    } catch (error) {
      const message = error instanceof ApiError ? error.message : 'network error';
      this.store.voteFailed(ticketId, message);
    }
  }

  /** Load the drill-down view, recording JoinedViaLink once per session. */
  async openTicket(ticketId: string): Promise<DetailResult> {
    let detail: TicketDetail;
    try {
      detail = await this.api.getTicket(ticketId);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        return { kind: 'not-found', ticketId };
      }
      throw error;
    }
    if (this.store.claimJoin(ticketId)) {
      try {
        await this.api.postFeedback(ticketId, 'JoinedViaLink');
      } catch {
        // Not recorded, so a later open in this session may try again.
        this.store.revertJoin(ticketId);
      }
    }
    return { kind: 'found', detail };
  }
}
