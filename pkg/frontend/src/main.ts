// Browser entry point: wires the controller to the DOM.

import { ApiClient } from './api.js';
import { ConsoleController } from './console.js';
import { FeedStore } from './feed.js';
import type { JoinMemory } from './feed.js';
import { renderFeed, renderNotFound, renderTicketDetail } from './render.js';

const JOIN_KEY_PREFIX = 'escalator-joined:';

class StorageJoins implements JoinMemory {
  constructor(private readonly storage: Storage) {}
  has(ticketId: string): boolean {
    return this.storage.getItem(JOIN_KEY_PREFIX + ticketId) !== null;
  }
  add(ticketId: string): void {
    this.storage.setItem(JOIN_KEY_PREFIX + ticketId, '1');
  }
  remove(ticketId: string): void {
    this.storage.removeItem(JOIN_KEY_PREFIX + ticketId);
  }
}

function main(): void {
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app container');

  const api = new ApiClient('');
  const store = new FeedStore(new StorageJoins(window.sessionStorage));
  const controller = new ConsoleController(api, store, '/stream');

  let categories: string[] = [];
  let view: { kind: 'feed' } | { kind: 'detail'; html: string } = { kind: 'feed' };

  const draw = (): void => {
    root.innerHTML =
      view.kind === 'feed' ? renderFeed(store.list(), store.connected, categories) : view.html;
  };
  store.onChange = () => {
    if (view.kind === 'feed') draw();
  };

  void api.getConfig().then((config) => {
    categories = config.categories;
    draw();
  });
  controller.subscribe();

  root.addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    const action = target.dataset.action;
    const ticketId = target.dataset.ticket;
    if (action === 'back') {
      view = { kind: 'feed' };
      draw();
      return;
    }
    if (!action || !ticketId) return;
    if (action === 'upvote') {
      void controller.vote(ticketId, 'Upvote');
    } else if (action === 'downvote') {
      const select = root.querySelector<HTMLSelectElement>(
        `select[data-role="correction"][data-ticket="${CSS.escape(ticketId)}"]`,
      );
      const corrected = select?.value || undefined;
      void controller.vote(ticketId, 'Downvote', corrected);
    } else if (action === 'open') {
      void controller.openTicket(ticketId).then((result) => {
        view = {
          kind: 'detail',
          html:
            result.kind === 'found'
              ? renderTicketDetail(result.detail)
              : renderNotFound(result.ticketId),
        };
        draw();
      });
    }
  });

  draw();
}

main();
