import { describe, expect, it } from 'vitest';

import { ApiClient, ApiRequestError } from '../src/api.js';

interface Recorded {
  url: string;
  method?: string;
  headers: Record<string, string>;
  body: unknown;
}

function mockFetch(responses: Array<{ status?: number; body: unknown }>) {
  const calls: Recorded[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({
      url,
      method: init?.method,
      headers: (init?.headers ?? {}) as Record<string, string>,
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    });
    const next = responses.shift() ?? { status: 200, body: {} };
    return new Response(JSON.stringify(next.body), {
      status: next.status ?? 200,
      headers: { 'Content-Type': 'application/json' },
    });
  };
  return { calls, fetchFn };
}

describe('ApiClient', () => {
  it('logs in and attaches the bearer token to later requests', async () => {
    const { calls, fetchFn } = mockFetch([
      { body: { token: 'tok-123', role: 'patient', patients: [] } },
      { body: [] },
    ]);
    const api = new ApiClient('http://host', fetchFn);
    const session = await api.login('alice', 'pw');
    expect(session.role).toBe('patient');
    await api.listSubmissions();
    expect(calls[0].url).toBe('http://host/auth/login');
    expect(calls[0].body).toEqual({ user_id: 'alice', password: 'pw' });
    expect(calls[1].headers['Authorization']).toBe('Bearer tok-123');
  });

  it('posts classify submissions with the exact wire shape', async () => {
    const { calls, fetchFn } = mockFetch([{ body: { id: 7 } }]);
    const api = new ApiClient('http://host', fetchFn);
    api.setToken('t');
    const id = await api.submitClassify('AAAA');
    expect(id).toBe(7);
    expect(calls[0].method).toBe('POST');
    expect(calls[0].url).toBe('http://host/submissions');
    expect(calls[0].body).toEqual({ type: 'classify', image_base64: 'AAAA' });
  });

  it('sends confirm labels verbatim', async () => {
    const { calls, fetchFn } = mockFetch([{ body: { learn_id: 12 } }]);
    const api = new ApiClient('http://host', fetchFn);
    api.setToken('t');
    const learnId = await api.confirm(5, 'Pneumonia');
    expect(learnId).toBe(12);
    expect(calls[0].url).toBe('http://host/submissions/5/confirm');
    expect(calls[0].body).toEqual({ label: 'Pneumonia' });
  });

  it('builds list filters as query parameters', async () => {
    const { calls, fetchFn } = mockFetch([{ body: [] }, { body: [] }]);
    const api = new ApiClient('http://host', fetchFn);
    await api.listSubmissions({ status: 'learned', type: 'learn' });
    await api.listSubmissions();
    expect(calls[0].url).toBe('http://host/submissions?status=learned&type=learn');
    expect(calls[1].url).toBe('http://host/submissions');
  });

  it('surfaces {code, message} error bodies', async () => {
    const { fetchFn } = mockFetch([
      { status: 403, body: { code: 'authorization_error', message: 'not paired' } },
    ]);
    const api = new ApiClient('http://host', fetchFn);
    api.setToken('t');
    const err = await api.confirm(1, 'Normal').catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiRequestError);
    expect((err as ApiRequestError).status).toBe(403);
    expect((err as ApiRequestError).code).toBe('authorization_error');
    expect((err as ApiRequestError).message).toBe('not paired');
  });

  it('health returns false when the server is unreachable', async () => {
    const api = new ApiClient('http://host', async () => {
      throw new Error('ECONNREFUSED');
    });
    expect(await api.health()).toBe(false);
  });
});
