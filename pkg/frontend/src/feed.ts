// Alert feed state. The store holds no truth of its own: every fact comes
// from a stream event or a backfill of GET /escalations, so closing and
// reopening the console reproduces the same view.

import type { AlertCard, AlertNotification, EscalationView, GroupUpdate } from './types.js';

export interface JoinMemory {
  has(ticketId: string): boolean;
  add(ticketId: string): void;
  remove(ticketId: string): void;
}

/** In-memory join memory; the browser entry point backs it with sessionStorage. */
export class SessionJoins implements JoinMemory {
  private joined = new Set<string>();
  has(ticketId: string): boolean {
    return this.joined.has(ticketId);
  }
  add(ticketId: string): void {
    this.joined.add(ticketId);
  }
  remove(ticketId: string): void {
    this.joined.delete(ticketId);
  }
}

export class FeedStore {
  private cards = new Map<string, AlertCard>();
  private order: string[] = []; // newest first
  connected = false;
  onChange: (() => void) | null = null;

  constructor(private readonly joins: JoinMemory = new SessionJoins()) {}

  private changed(): void {
    this.onChange?.();
  }

  list(): AlertCard[] {
    return this.order
      .map((id) => this.cards.get(id))
      .filter((card): card is AlertCard => card !== undefined);
  }

  get(ticketId: string): AlertCard | undefined {
    return this.cards.get(ticketId);
  }

  setConnected(connected: boolean): void {
    if (this.connected !== connected) {
      this.connected = connected;
      this.changed();
    }
  }

  handleAlert(alert: AlertNotification): void {
    if (!this.cards.has(alert.ticket_id)) {
      this.order.unshift(alert.ticket_id);
    }
    const previous = this.cards.get(alert.ticket_id);
    this.cards.set(alert.ticket_id, {
      ticketId: alert.ticket_id,
      category: alert.category,
      issueText: alert.issue_summary.text,
      product: alert.issue_summary.product,
      groupSize: alert.group_size,
      linkUrl: alert.link_url,
      vote: previous?.vote ?? { kind: 'none' },
    });
    this.changed();
  }

  handleGroup(update: GroupUpdate): void {
    const card = this.cards.get(update.representative);
    if (card) {
      card.groupSize = update.group_size;
      this.changed();
    }
  }

  /** Merge the authoritative open-escalation list; keeps local vote state. */
  backfill(escalations: EscalationView[]): void {
    for (const escalation of [...escalations].sort((a, b) => a.created_at - b.created_at)) {
      const existing = this.cards.get(escalation.representative);
      if (existing) {
        existing.groupSize = escalation.group_size;
        existing.issueText = escalation.issue.text;
        existing.product = escalation.issue.product;
      } else {
        this.order.unshift(escalation.representative);
        this.cards.set(escalation.representative, {
          ticketId: escalation.representative,
          category: escalation.category,
          issueText: escalation.issue.text,
          product: escalation.issue.product,
          groupSize: escalation.group_size,
          linkUrl: `/tickets/${escalation.representative}`,
          vote: { kind: 'none' },
        });
      }
    }
    this.changed();
  }

  voteRequested(ticketId: string): void {
    const card = this.cards.get(ticketId);
    if (card) {
      card.vote = { kind: 'pending' };
      this.changed();
    }
  }

  voteAcknowledged(ticketId: string, vote: 'Upvote' | 'Downvote', corrected: string | null): void {
    const card = this.cards.get(ticketId);
    if (card) {
      card.vote = { kind: 'voted', vote, corrected };
      this.changed();
    }
  }

  voteFailed(ticketId: string, message: string): void {
    const card = this.cards.get(ticketId);
    if (card) {
      card.vote = { kind: 'error', message };
      this.changed();
    }
  }

  /** True exactly once per ticket per session; caller reverts on a failed POST. */
  claimJoin(ticketId: string): boolean {
    if (this.joins.has(ticketId)) return false;
    this.joins.add(ticketId);
    return true;
  }

  revertJoin(ticketId: string): void {
    this.joins.remove(ticketId);
  }
}
