// Wire types of the escalator service API, as documented in the backend README.

export type FeedbackKind = 'Upvote' | 'Downvote' | 'JoinedViaLink';

export interface IssueSummary {
  text: string;
  product: string | null;
}

export interface AlertNotification {
  ticket_id: string;
  category: string;
  issue_summary: IssueSummary;
  group_size: number;
  link_url: string;
}

export interface StateChange {
  ticket_id: string;
  state: string;
  category: string | null;
  linked_to: string | null;
  timestamp: number;
}

export interface GroupUpdate {
  group_id: string;
  representative: string;
  group_size: number;
  joined: string;
}

export interface EscalationView {
  group_id: string;
  representative: string;
  category: string;
  issue: IssueSummary;
  created_at: number;
  group_size: number;
  members: string[];
  linked: { ticket_id: string; issue_text: string }[];
}

export interface TranscriptMessage {
  author: 'customer' | 'analyst';
  text: string;
  timestamp: number;
}

export interface TicketDetail {
  id: string;
  title: string;
  state: string;
  category: string | null;
  linked_to: string | null;
  messages: number;
  group_id: string | null;
  transcript: TranscriptMessage[];
  history: { state: string; timestamp: number }[];
  issue: IssueSummary | null;
  group: EscalationView | null;
}

export interface ServiceConfig {
  categories: string[];
  similarity_threshold: number;
}

/** Vote state of one alert card; only acknowledged votes are rendered as cast. */
export type VoteState =
  | { kind: 'none' }
  | { kind: 'pending' }
  | { kind: 'voted'; vote: 'Upvote' | 'Downvote'; corrected: string | null }
  | { kind: 'error'; message: string };

export interface AlertCard {
  ticketId: string;
  category: string;
  issueText: string;
  product: string | null;
  groupSize: number;
  linkUrl: string;
  vote: VoteState;
}
