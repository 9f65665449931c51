/**
 * Entry point: wires the store to the page and the keyboard.
 */

import { ApiClient } from './api.js';
import { SessionStore } from './state.js';
import { handleKey, renderBadges, renderCase, renderQueue } from './views.js';

export function mount(root: HTMLElement, api = new ApiClient()): SessionStore {
  const store = new SessionStore(api);

  const render = () => {
    const state = store.getState();
    root.replaceChildren(
      renderBadges(store),
      renderQueue(state, (id) => void store.openCase(id)),
      renderCase(state, store),
    );
  };

  store.subscribe(render);
  render();
  void store.refresh();

  document.addEventListener('keydown', (event) => {
    const target = event.target as HTMLElement | null;
    if (target && target.tagName === 'INPUT') return;
    if (handleKey(event.key, store.getState(), store)) {
      event.preventDefault();
    }
  });

  return store;
}

declare global {
  interface Window {
    adjudicationStore?: SessionStore;
  }
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  window.adjudicationStore = mount(
    document.getElementById('app') as HTMLElement,
  );
}
