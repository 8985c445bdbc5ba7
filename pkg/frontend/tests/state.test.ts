import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import { ApiClient } from '../src/api.js';
import { ConfirmGuard, SubmissionFeed, probabilityBars } from '../src/state.js';
import type { SubmissionView } from '../src/types.js';

function submission(overrides: Partial<SubmissionView> = {}): SubmissionView {
  return {
    id: 1,
    submitter: 'alice',
    type: 'classify',
    status: 'classified',
    label: null,
    prediction: {
      label: 'Normal',
      probabilities: { 'COVID-19': 0.1, Normal: 0.7, Pneumonia: 0.2 },
      validator_confidence: 0.9,
    },
    created_at: '2026-01-01T00:00:00.000+00:00',
    processed_at: '2026-01-01T00:00:01.000+00:00',
    learned_at: null,
    error_detail: null,
    confirmation: null,
    ...overrides,
  };
}

function apiReturning(pages: Array<SubmissionView[] | Error>): ApiClient {
  const fetchFn = async (): Promise<Response> => {
    const page = pages.shift();
    if (page === undefined) return new Response('[]', { status: 200 });
    if (page instanceof Error) throw page;
    return new Response(JSON.stringify(page), { status: 200 });
  };
  const api = new ApiClient('http://host', fetchFn);
  api.setToken('t');
  return api;
}

describe('SubmissionFeed', () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it('polls on the configured interval and upserts server snapshots', async () => {
    const api = apiReturning([
      [submission({ id: 1, status: 'queued', prediction: null })],
      [submission({ id: 1, status: 'classified' })],
    ]);
    const feed = new SubmissionFeed(api, 2000);
    const seen: string[][] = [];
    feed.subscribe((items) => seen.push(items.map((s) => `${s.id}:${s.status}`)));
    feed.start();
    await vi.advanceTimersByTimeAsync(10);
    expect(seen.at(-1)).toEqual(['1:queued']);
    await vi.advanceTimersByTimeAsync(2000);
    expect(seen.at(-1)).toEqual(['1:classified']);
    feed.stop();
  });

  it('raises the retry banner on failure without dropping items', async () => {
    const api = apiReturning([
      [submission({ id: 4 })],
      new Error('connection refused'),
      [submission({ id: 4 }), submission({ id: 5 })],
    ]);
    const feed = new SubmissionFeed(api, 1000);
    feed.start();
    await vi.advanceTimersByTimeAsync(10);
    expect(feed.items.map((s) => s.id)).toEqual([4]);
    expect(feed.lastError).toBeNull();

    await vi.advanceTimersByTimeAsync(1000);
    expect(feed.lastError).toMatch(/retrying/);
    expect(feed.items.map((s) => s.id)).toEqual([4]); // not lost

    await vi.advanceTimersByTimeAsync(1000);
    expect(feed.lastError).toBeNull();
    expect(feed.items.map((s) => s.id)).toEqual([4, 5]);
    feed.stop();
  });

  it('stop() halts polling', async () => {
    let requests = 0;
    const api = new ApiClient('http://host', async () => {
      requests += 1;
      return new Response('[]', { status: 200 });
    });
    const feed = new SubmissionFeed(api, 500);
    feed.start();
    await vi.advanceTimersByTimeAsync(10);
    feed.stop();
    const before = requests;
    await vi.advanceTimersByTimeAsync(5000);
    expect(requests).toBe(before);
  });
});

describe('ConfirmGuard', () => {
  it('allows exactly one confirmation per submission', async () => {
    const calls: string[] = [];
    const api = new ApiClient('http://host', async (url) => {
      calls.push(url);
      return new Response(JSON.stringify({ learn_id: 9 }), { status: 200 });
    });
    api.setToken('t');
    const guard = new ConfirmGuard();
    const sub = submission({ id: 3 });
    expect(guard.canConfirm(sub)).toBe(true);
    const learnId = await guard.confirm(api, 3, 'Pneumonia');
    expect(learnId).toBe(9);
    expect(guard.canConfirm(sub)).toBe(false);
    await expect(guard.confirm(api, 3, 'Normal')).rejects.toThrow(/already confirmed/);
    expect(calls).toHaveLength(1);
  });

  it('blocks confirmation for non-classified or already-confirmed docs', () => {
    const guard = new ConfirmGuard();
    expect(guard.canConfirm(submission({ status: 'queued', prediction: null }))).toBe(false);
    expect(
      guard.canConfirm(
        submission({
          confirmation: {
            doctor: 'drbob',
            label: 'Normal',
            learn_id: 2,
            at: '2026-01-01T00:00:02.000+00:00',
          },
        }),
      ),
    ).toBe(false);
  });

  it('re-allows confirmation after a failed attempt', async () => {
    const api = new ApiClient('http://host', async () => {
      return new Response(
        JSON.stringify({ code: 'state_error', message: 'not classified' }),
        { status: 409 },
      );
    });
    api.setToken('t');
    const guard = new ConfirmGuard();
    await expect(guard.confirm(api, 8, 'Normal')).rejects.toThrow(/not classified/);
    expect(guard.canConfirm(submission({ id: 8 }))).toBe(true);
  });
});

describe('probabilityBars', () => {
  it('sorts bars by probability, largest first', () => {
    const bars = probabilityBars(submission());
    expect(bars.map((b) => b.label)).toEqual(['Normal', 'Pneumonia', 'COVID-19']);
    expect(bars[0].fraction).toBeCloseTo(0.7);
  });

  it('is empty without a prediction', () => {
    expect(probabilityBars(submission({ prediction: null }))).toEqual([]);
  });
});
