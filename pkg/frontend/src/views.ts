/**
 * DOM rendering for the queue and case views.
 *
 * Views are pure functions from state to elements; main.ts swaps them
 * into the page on every store notification.  Keyboard shortcuts: digits
 * pick a decision value, Enter submits, N skips to the next case.
 */

import { AdjudicationItem } from './api.js';
import { PERCEPTION_HELP, SessionState, SessionStore } from './state.js';

const KIND_LABELS: Record<string, string> = {
  race_no_majority: 'Race (no majority)',
  gender_tie: 'Gender (tie)',
  dob_review: 'Birthdate review',
};

function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  for (const child of children) node.append(child);
  return node;
}

export function renderBadges(store: SessionStore): HTMLElement {
  const counts = store.pendingCountByKind();
  const badges = Object.entries(counts).map(([kind, n]) =>
    el('span', { class: 'badge', 'data-kind': kind }, [
      `${KIND_LABELS[kind] ?? kind}: ${n}`,
    ]),
  );
  if (badges.length === 0) {
    badges.push(el('span', { class: 'badge empty' }, ['no pending cases']));
  }
  return el('div', { class: 'badges' }, badges);
}

export function renderQueue(
  state: SessionState,
  onOpen: (itemId: string) => void,
): HTMLElement {
  if (state.notice.kind === 'connection-lost') {
    return el('div', { class: 'banner error', role: 'alert' }, [
      'Service unreachable — check that `facelab serve` is running.',
    ]);
  }
  if (state.queue.length === 0) {
    const decided = state.summary
      ? state.summary.total - state.summary.pending
      : 0;
    return el('div', { class: 'empty-state' }, [
      `Queue clear: ${decided} of ${state.summary?.total ?? 0} cases decided.`,
    ]);
  }
  const rows = state.queue.map((item) => {
    const button = el(
      'button',
      { class: 'queue-row', 'data-item': item.item_id, type: 'button' },
      [`${KIND_LABELS[item.kind] ?? item.kind} — subject ${item.subject_id}`],
    );
    button.addEventListener('click', () => onOpen(item.item_id));
    return el('li', {}, [button]);
  });
  return el('ul', { class: 'queue' }, rows);
}

function evidenceTable(item: AdjudicationItem): HTMLElement {
  const header = el('tr', {}, ['image', 'arrest date', 'gender', 'race', 'dob']
    .map((h) => el('th', {}, [h])));
  const rows = item.evidence.records.map((r) =>
    el('tr', {}, [
      el('td', {}, [r.image_id]),
      el('td', {}, [r.arrest_date]),
      el('td', {}, [r.gender]),
      el('td', {}, [r.race]),
      el('td', {}, [r.dob]),
    ]),
  );
  return el('table', { class: 'evidence' }, [header, ...rows]);
}

function thumbnails(item: AdjudicationItem): HTMLElement {
  const urls = item.evidence.image_urls ?? [];
  const imgs = urls.map((url) =>
    el('img', { src: url, width: '60', height: '70', class: 'thumb' }),
  );
  const strip = el('div', { class: 'thumbs' }, imgs);
  strip.addEventListener('click', () => {
    for (const img of imgs) {
      const zoomed = img.getAttribute('width') === '120';
      img.setAttribute('width', zoomed ? '60' : '120');
      img.setAttribute('height', zoomed ? '70' : '140');
    }
  });
  return strip;
}

function noticeLine(state: SessionState): HTMLElement | null {
  switch (state.notice.kind) {
    case 'already-decided':
      return el('div', { class: 'banner warn', role: 'alert' }, [
        `Already decided (${state.notice.decision ?? '?'}). ` +
          'Enable override to change it.',
      ]);
    case 'invalid-value':
      return el('div', { class: 'banner error', role: 'alert' }, [
        `Value rejected; allowed: ${state.notice.allowed.join(', ')}`,
      ]);
    case 'retry-available':
      return el('div', { class: 'banner warn', role: 'alert' }, [
        'Submit failed to reach the service. Press Retry to re-send.',
      ]);
    default:
      return null;
  }
}

export function renderCase(
  state: SessionState,
  store: SessionStore,
): HTMLElement {
  const item = state.current;
  if (!item) {
    return el('div', { class: 'case empty-state' }, ['Select a case.']);
  }
  const decided = item.status === 'decided' && !state.form.override;

  const buttons = item.allowed_values.map((value, i) => {
    const selected = state.form.decision === value;
    const b = el(
      'button',
      {
        type: 'button',
        class: `decision${selected ? ' selected' : ''}`,
        'data-value': value,
        'data-shortcut': String(i + 1),
        ...(decided ? { disabled: 'disabled' } : {}),
      },
      [`${i + 1}: ${value}`],
    );
    b.addEventListener('click', () => store.setDecision(value));
    return b;
  });

  const annotator = el('input', {
    type: 'text',
    class: 'annotator',
    placeholder: 'annotator id',
    value: state.form.annotator,
  }) as HTMLInputElement;
  annotator.addEventListener('input', () =>
    store.setAnnotator(annotator.value),
  );

  const override = el('input', {
    type: 'checkbox',
    class: 'override',
    ...(state.form.override ? { checked: 'checked' } : {}),
  }) as HTMLInputElement;
  override.addEventListener('change', () =>
    store.setOverride(override.checked),
  );

  const submit = el(
    'button',
    {
      type: 'button',
      class: 'submit',
      ...(store.canSubmit() && !decided ? {} : { disabled: 'disabled' }),
    },
    ['Submit decision'],
  );
  submit.addEventListener('click', () => void store.submit());

  const retryButton = el('button', { type: 'button', class: 'retry' }, [
    'Retry',
  ]);
  retryButton.addEventListener('click', () => void store.retry());

  const children: (HTMLElement | string)[] = [
    el('h2', {}, [
      `${KIND_LABELS[item.kind] ?? item.kind} — subject ${item.subject_id}`,
    ]),
    evidenceTable(item),
    thumbnails(item),
    el('p', { class: 'help' }, [PERCEPTION_HELP[item.kind] ?? '']),
  ];
  const notice = noticeLine(state);
  if (notice) children.push(notice);
  if (state.notice.kind === 'retry-available') children.push(retryButton);
  if (decided) {
    children.push(
      el('p', { class: 'decided-note' }, [
        `Decided: ${item.decision ?? '?'} by ${item.decided_by ?? '?'}`,
      ]),
    );
  }
  children.push(
    el('div', { class: 'decision-row' }, buttons),
    el('label', {}, ['Annotator ', annotator]),
    el('label', {}, ['Override ', override]),
    submit,
  );
  return el('div', { class: 'case' }, children);
}

/** Map a keydown to a store action; returns true when handled. */
export function handleKey(
  key: string,
  state: SessionState,
  store: SessionStore,
): boolean {
  const item = state.current;
  if (!item) return false;
  const index = Number.parseInt(key, 10) - 1;
  if (index >= 0 && index < item.allowed_values.length) {
    store.setDecision(item.allowed_values[index]);
    return true;
  }
  if (key === 'Enter' && store.canSubmit()) {
    void store.submit();
    return true;
  }
  if (key.toLowerCase() === 'n') {
    void store.openNextPending();
    return true;
  }
  return false;
}
