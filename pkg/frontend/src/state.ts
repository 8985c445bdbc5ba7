// View-state layer between the API client and the DOM views. Holds session,
// the polled submission feed, and the confirm-once guard. Every status shown
// to the user comes verbatim from a server response; nothing here invents a
// terminal state.

import { ApiClient, ApiRequestError } from './api.js';
import type { Session, SubmissionView, WireLabel } from './types.js';

export const POLL_INTERVAL_MS = 2000;

export class SessionStore {
  session: Session | null = null;

  constructor(private readonly api: ApiClient) {}

  async login(userId: string, password: string): Promise<Session> {
    this.session = await this.api.login(userId, password);
    return this.session;
  }

  logout(): void {
    this.session = null;
    this.api.setToken(null);
  }

  get role(): string | null {
    return this.session?.role ?? null;
  }
}

export interface FeedListener {
  (items: SubmissionView[], error: string | null): void;
}

/**
 * Polls GET /submissions and keeps the latest server snapshot. A failed poll
 * raises the retry banner but never drops previously seen items.
 */
export class SubmissionFeed {
  items: SubmissionView[] = [];
  lastError: string | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private listeners: FeedListener[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  subscribe(listener: FeedListener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.items, this.lastError);
    }
  }

  async refresh(): Promise<void> {
    try {
      this.items = await this.api.listSubmissions();
      this.lastError = null;
    } catch (err) {
      this.lastError =
        err instanceof ApiRequestError
          ? `${err.code}: ${err.message}`
          : 'server unreachable, retrying';
    }
    this.emit();
  }

  start(): void {
    if (this.timer !== null) return;
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}

/** Client-side guard so a submission can be confirmed at most once. */
export class ConfirmGuard {
  private readonly confirmed = new Set<number>();
  private readonly pending = new Set<number>();

  canConfirm(submission: SubmissionView): boolean {
    return (
      submission.status === 'classified' &&
      submission.confirmation === null &&
      !this.confirmed.has(submission.id) &&
      !this.pending.has(submission.id)
    );
  }

  async confirm(api: ApiClient, id: number, label: WireLabel): Promise<number> {
    if (this.confirmed.has(id) || this.pending.has(id)) {
      throw new Error(`submission ${id} is already confirmed`);
    }
    this.pending.add(id);
    try {
      const learnId = await api.confirm(id, label);
      this.confirmed.add(id);
      return learnId;
    } finally {
      this.pending.delete(id);
    }
  }
}

/** Probability bars for a card, largest first. */
export function probabilityBars(
  submission: SubmissionView,
): { label: string; fraction: number }[] {
  if (!submission.prediction) return [];
  return Object.entries(submission.prediction.probabilities)
    .map(([label, fraction]) => ({ label, fraction }))
    .sort((a, b) => b.fraction - a.fraction);
}

/** Locally remembered thumbnails for the patient's own uploads. */
export class ThumbnailStore {
  private readonly byId = new Map<number, string>();

  remember(id: number, dataUrl: string): void {
    this.byId.set(id, dataUrl);
  }

  get(id: number): string | null {
    return this.byId.get(id) ?? null;
  }
}
