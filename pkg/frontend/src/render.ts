// Pure HTML rendering; all state comes in as arguments.

import type { AlertCard, TicketDetail } from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}

function voteBadge(card: AlertCard): string {
  switch (card.vote.kind) {
    case 'none':
      return '';
    case 'pending':
      return '<span class="vote-state pending">sending…</span>';
    case 'voted': {
      const label =
        card.vote.vote === 'Upvote'
          ? 'upvoted'
          : card.vote.corrected
            ? `downvoted → ${escapeHtml(card.vote.corrected)}`
            : 'downvoted';
      return `<span class="vote-state voted">${label}</span>`;
    }
    case 'error':
      return `<span class="vote-state error">vote failed: ${escapeHtml(card.vote.message)}</span>`;
  }
}

export function renderAlertCard(card: AlertCard, categories: string[]): string {
  const product = card.product ? `<span class="badge product">${escapeHtml(card.product)}</span>` : '';
  const options = categories
    .map((name) => `<option value="${escapeHtml(name)}">${escapeHtml(name)}</option>`)
    .join('');
  return `
  <article class="alert-card" data-ticket="${escapeHtml(card.ticketId)}">
    <div class="meta">
      <span class="badge category">${escapeHtml(card.category)}</span>
      ${product}
      <span class="badge group-size">group of ${card.groupSize}</span>
    </div>
    <p class="issue">${escapeHtml(card.issueText)}</p>
    <div class="actions">
      <button data-action="upvote" data-ticket="${escapeHtml(card.ticketId)}">Upvote</button>
      <button data-action="downvote" data-ticket="${escapeHtml(card.ticketId)}">Downvote</button>
      <select data-role="correction" data-ticket="${escapeHtml(card.ticketId)}" title="corrected category">
        <option value="">no correction</option>
        ${options}
      </select>
      <button data-action="open" data-ticket="${escapeHtml(card.ticketId)}">Open ticket</button>
      ${voteBadge(card)}
    </div>
  </article>`;
}

export function renderFeed(cards: AlertCard[], connected: boolean, categories: string[]): string {
  const stale = connected
    ? ''
    : '<div class="stale-indicator">connection lost — reconnecting, data may be stale</div>';
  if (cards.length === 0) {
    return `${stale}<div class="empty-state">No escalation alerts yet.</div>`;
  }
  return stale + cards.map((card) => renderAlertCard(card, categories)).join('\n');
}

export function renderTicketDetail(detail: TicketDetail): string {
  const transcript = detail.transcript
    .map(
      (message) =>
        `<li class="msg ${message.author}"><b>${message.author}:</b> ${escapeHtml(message.text)}</li>`,
    )
    .join('');
  const history = detail.history
    .map((entry) => `<li>${escapeHtml(entry.state)} @ ${entry.timestamp}</li>`)
    .join('');
  const issue = detail.group?.issue ?? detail.issue;
  const members = detail.group
    ? detail.group.members
        .map((member) => `<li data-member="${escapeHtml(member)}">${escapeHtml(member)}</li>`)
        .join('')
    : '';
  return `
  <section class="ticket-detail" data-ticket="${escapeHtml(detail.id)}">
    <h2>${escapeHtml(detail.title)} <span class="badge state">${escapeHtml(detail.state)}</span></h2>
    ${issue ? `<p class="issue">${escapeHtml(issue.text)}</p>` : ''}
    <h3>Group members</h3>
    <ul class="members">${members || '<li>none</li>'}</ul>
    <h3>Transcript</h3>
    <ul class="transcript">${transcript}</ul>
    <h3>State history</h3>
    <ul class="history">${history}</ul>
    <button data-action="back">Back to feed</button>
  </section>`;
}

export function renderNotFound(ticketId: string): string {
  return `<section class="not-found">Ticket ${escapeHtml(ticketId)} was not found.
  <button data-action="back">Back to feed</button></section>`;
}
