import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { SessionStore } from '../src/state.js';
import { FakeService, makeItem } from './fake-service.js';

function setup(items = [makeItem('a', 'race_no_majority'), makeItem('b', 'gender_tie')]) {
  const service = new FakeService(items);
  const store = new SessionStore(new ApiClient('', service.fetch));
  return { service, store };
}

describe('SessionStore', () => {
  it('refresh loads the pending queue and summary counts', async () => {
    const { store } = setup();
    await store.refresh();
    expect(store.getState().queue.map((i) => i.item_id)).toEqual(['a', 'b']);
    expect(store.pendingCountByKind()).toEqual({
      race_no_majority: 1,
      gender_tie: 1,
    });
  });

  it('openCase resets the form and clears notices', async () => {
    const { store } = setup();
    await store.refresh();
    await store.openCase('a');
    const state = store.getState();
    expect(state.current?.item_id).toBe('a');
    expect(state.form).toEqual({ decision: null, annotator: '', override: false });
  });

  it('submit is gated on an open case with a decision', async () => {
    const { store } = setup();
    await store.refresh();
    expect(store.canSubmit()).toBe(false);
    await store.openCase('a');
    expect(store.canSubmit()).toBe(false);
    store.setDecision('W');
    expect(store.canSubmit()).toBe(true);
  });

  it('a successful submit appends to the log and advances the queue', async () => {
    const { service, store } = setup();
    await store.refresh();
    await store.openCase('a');
    store.setDecision('W');
    store.setAnnotator('alice');
    expect(await store.submit()).toBe(true);
    expect(service.log).toEqual([
      { item_id: 'a', decision: 'W', annotator: 'alice' },
    ]);
    const state = store.getState();
    expect(state.queue.map((i) => i.item_id)).toEqual(['b']);
    expect(state.current?.item_id).toBe('b');
    expect(state.form.decision).toBeNull();
  });

  it('decided items shrink their badge count after refetch', async () => {
    const { store } = setup();
    await store.refresh();
    expect(store.pendingCountByKind().race_no_majority).toBe(1);
    await store.openCase('a');
    store.setDecision('B');
    await store.submit();
    expect(store.pendingCountByKind().race_no_majority).toBe(0);
  });

  it('409 keeps the open case and form and reports the prior decision', async () => {
    const { service, store } = setup();
    // Another annotator decides the item between open and submit.
    await store.refresh();
    await store.openCase('a');
    const other = service.items.find((i) => i.item_id === 'a')!;
    other.status = 'decided';
    other.decision = 'H';
    store.setDecision('W');
    store.setAnnotator('alice');
    expect(await store.submit()).toBe(false);
    const state = store.getState();
    expect(state.notice).toEqual({ kind: 'already-decided', decision: 'H' });
    expect(state.current?.item_id).toBe('a');
    expect(state.form).toEqual({ decision: 'W', annotator: 'alice', override: false });
    expect(service.log).toHaveLength(0);
  });

  it('409 then override resubmits the same form successfully', async () => {
    const { service, store } = setup();
    await store.refresh();
    await store.openCase('a');
    const other = service.items.find((i) => i.item_id === 'a')!;
    other.status = 'decided';
    other.decision = 'H';
    store.setDecision('W');
    await store.submit();
    store.setOverride(true);
    expect(await store.submit()).toBe(true);
    expect(service.log).toEqual([
      { item_id: 'a', decision: 'W', annotator: 'anonymous' },
    ]);
  });

  it('422 keeps the form and surfaces the allowed values', async () => {
    const { service, store } = setup();
    await store.refresh();
    await store.openCase('b');
    store.setDecision('X');
    store.setAnnotator('bob');
    expect(await store.submit()).toBe(false);
    const state = store.getState();
    expect(state.notice).toEqual({ kind: 'invalid-value', allowed: ['M', 'F'] });
    expect(state.current?.item_id).toBe('b');
    expect(state.form.annotator).toBe('bob');
    expect(service.log).toHaveLength(0);
  });

  it('a dropped connection arms retry; retry re-sends once, no duplicate', async () => {
    const { service, store } = setup();
    await store.refresh();
    await store.openCase('a');
    store.setDecision('O');
    store.setAnnotator('alice');

    service.offline = true;
    expect(await store.submit()).toBe(false);
    expect(store.getState().notice).toEqual({ kind: 'retry-available' });
    expect(service.log).toHaveLength(0);
    // Form state survives the failure.
    expect(store.getState().form.decision).toBe('O');

    service.offline = false;
    expect(await store.retry()).toBe(true);
    expect(service.log).toEqual([
      { item_id: 'a', decision: 'O', annotator: 'alice' },
    ]);
    // A second retry is a no-op: the captured payload was consumed.
    expect(await store.retry()).toBe(false);
    expect(service.log).toHaveLength(1);
  });

  it('refresh while offline shows the connection-lost notice', async () => {
    const { service, store } = setup();
    service.offline = true;
    await store.refresh();
    expect(store.getState().notice).toEqual({ kind: 'connection-lost' });
  });

  it('notifies subscribers on every state change', async () => {
    const { store } = setup();
    let calls = 0;
    const unsubscribe = store.subscribe(() => {
      calls += 1;
    });
    await store.refresh();
    expect(calls).toBeGreaterThan(0);
    const seen = calls;
    unsubscribe();
    await store.refresh();
    expect(calls).toBe(seen);
  });
});
