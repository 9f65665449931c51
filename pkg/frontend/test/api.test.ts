import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError, ConnectionError } from '../src/api.js';
import { FakeService, makeItem } from './fake-service.js';

function client(service: FakeService): ApiClient {
  return new ApiClient('', service.fetch);
}

describe('ApiClient', () => {
  it('lists pending items with pagination params', async () => {
    const service = new FakeService([
      makeItem('a', 'race_no_majority'),
      makeItem('b', 'gender_tie'),
    ]);
    const page = await client(service).listItems('pending', 1, 10);
    expect(page.total).toBe(2);
    expect(page.items.map((i) => i.item_id)).toEqual(['a', 'b']);
    expect(page.page_size).toBe(10);
  });

  it('fetches a single item with its allowed values', async () => {
    const service = new FakeService([makeItem('a', 'race_no_majority')]);
    const item = await client(service).getItem('a');
    expect(item.allowed_values).toEqual(['B', 'W', 'A', 'H', 'O']);
    expect(item.evidence.records).toHaveLength(2);
  });

  it('submits a decision and returns the updated item and log hash', async () => {
    const service = new FakeService([makeItem('a', 'race_no_majority')]);
    const ack = await client(service).submitDecision('a', 'W', 'alice');
    expect(ack.item.status).toBe('decided');
    expect(ack.item.decision).toBe('W');
    expect(ack.log_hash).toBe('hash1');
    expect(service.log).toEqual([
      { item_id: 'a', decision: 'W', annotator: 'alice' },
    ]);
  });

  it('raises ApiError with the existing decision on 409', async () => {
    const service = new FakeService([makeItem('a', 'gender_tie')]);
    const api = client(service);
    await api.submitDecision('a', 'M', 'alice');
    const err = await api.submitDecision('a', 'F', 'bob').catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).existingDecision()).toBe('M');
  });

  it('overriding a decided item succeeds and appends again', async () => {
    const service = new FakeService([makeItem('a', 'gender_tie')]);
    const api = client(service);
    await api.submitDecision('a', 'M', 'alice');
    const ack = await api.submitDecision('a', 'F', 'bob', true);
    expect(ack.item.decision).toBe('F');
    expect(service.log).toHaveLength(2);
  });

  it('raises ApiError carrying allowed values on 422', async () => {
    const service = new FakeService([makeItem('a', 'gender_tie')]);
    const err = await client(service)
      .submitDecision('a', 'X', 'alice')
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(422);
    expect((err as ApiError).allowedValues()).toEqual(['M', 'F']);
  });

  it('raises ApiError on unknown item', async () => {
    const service = new FakeService([]);
    const err = await client(service).getItem('nope').catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
  });

  it('wraps transport failures in ConnectionError', async () => {
    const service = new FakeService([makeItem('a', 'gender_tie')]);
    service.offline = true;
    const err = await client(service).summary().catch((e) => e);
    expect(err).toBeInstanceOf(ConnectionError);
  });

  it('reports per-kind counts in the summary', async () => {
    const service = new FakeService([
      makeItem('a', 'race_no_majority'),
      makeItem('b', 'race_no_majority'),
      makeItem('c', 'gender_tie'),
    ]);
    const api = client(service);
    await api.submitDecision('b', 'O', 'alice');
    const summary = await api.summary();
    expect(summary.by_kind.race_no_majority).toEqual({
      pending: 1,
      decided: 1,
    });
    expect(summary.by_kind.gender_tie).toEqual({ pending: 1, decided: 0 });
    expect(summary.pending).toBe(2);
  });
});
