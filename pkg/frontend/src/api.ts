// API client layer: the only place the app touches the network.
// The service is mutated exclusively through POST /submissions and
// POST /submissions/{id}/confirm.

import type {
  ApiErrorBody,
  Metrics,
  Session,
  SubmissionView,
  WireLabel,
} from './types.js';

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private token: string | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) {
      headers['Authorization'] = `Bearer ${this.token}`;
    }
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let parsed: ApiErrorBody = { code: 'http_error', message: `HTTP ${response.status}` };
      try {
        parsed = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body: keep the generic message
      }
      throw new ApiRequestError(response.status, parsed.code, parsed.message);
    }
    return (await response.json()) as T;
  }

  async login(userId: string, password: string): Promise<Session> {
    const session = await this.request<Session>('POST', '/auth/login', {
      user_id: userId,
      password,
    });
    this.token = session.token;
    return session;
  }

  async submitClassify(imageBase64: string): Promise<number> {
    const body = { type: 'classify', image_base64: imageBase64 };
    const res = await this.request<{ id: number }>('POST', '/submissions', body);
    return res.id;
  }

  async getSubmission(id: number): Promise<SubmissionView> {
    return this.request<SubmissionView>('GET', `/submissions/${id}`);
  }

  async listSubmissions(filter?: {
    status?: string;
    type?: string;
  }): Promise<SubmissionView[]> {
    const params = new URLSearchParams();
    if (filter?.status) params.set('status', filter.status);
    if (filter?.type) params.set('type', filter.type);
    const query = params.toString();
    return this.request<SubmissionView[]>(
      'GET',
      query ? `/submissions?${query}` : '/submissions',
    );
  }

  async confirm(id: number, label: WireLabel): Promise<number> {
    const res = await this.request<{ learn_id: number }>(
      'POST',
      `/submissions/${id}/confirm`,
      { label },
    );
    return res.learn_id;
  }

  async metrics(): Promise<Metrics> {
    return this.request<Metrics>('GET', '/metrics');
  }

  async health(): Promise<boolean> {
    try {
      await this.request<{ status: string }>('GET', '/healthz');
      return true;
    } catch {
      return false;
    }
  }
}

export const fileToBase64 = (file: Blob): Promise<string> =>
  new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onerror = () => reject(reader.error);
    reader.onload = () => {
      const url = reader.result as string;
      resolve(url.slice(url.indexOf(',') + 1));
    };
    reader.readAsDataURL(file);
  });
