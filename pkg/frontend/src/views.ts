// DOM view layer. Renders from view-state only; all statuses and labels come
// from server documents. The session token is held in the API client and is
// never rendered.

import { ApiClient, ApiRequestError, fileToBase64 } from './api.js';
import {
  ConfirmGuard,
  SubmissionFeed,
  ThumbnailStore,
  probabilityBars,
} from './state.js';
import type { Metrics, Session, SubmissionView, WireLabel } from './types.js';
import { WIRE_LABELS } from './types.js';

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderCard(
  submission: SubmissionView,
  thumbnails?: ThumbnailStore,
): HTMLElement {
  const card = el('div', `card status-${submission.status}`);
  card.dataset.submissionId = String(submission.id);

  const header = el('div', 'card-header');
  header.append(el('span', 'card-id', `#${submission.id} ${submission.type}`));
  header.append(el('span', `badge badge-${submission.status}`, submission.status));
  card.append(header);

  const thumb = thumbnails?.get(submission.id);
  if (thumb) {
    const img = el('img', 'thumb');
    img.src = thumb;
    img.alt = `submission ${submission.id}`;
    card.append(img);
  }

  if (submission.prediction) {
    card.append(el('div', 'prediction-label', submission.prediction.label));
    const bars = el('div', 'bars');
    for (const { label, fraction } of probabilityBars(submission)) {
      const row = el('div', 'bar-row');
      row.append(el('span', 'bar-label', label));
      const track = el('div', 'bar-track');
      const fill = el('div', 'bar-fill');
      fill.style.width = `${(fraction * 100).toFixed(1)}%`;
      track.append(fill);
      row.append(track);
      row.append(el('span', 'bar-value', `${(fraction * 100).toFixed(1)}%`));
      bars.append(row);
    }
    card.append(bars);
  }

  if (submission.label) {
    card.append(el('div', 'meta', `label: ${submission.label}`));
  }
  if (submission.learned_at) {
    card.append(el('div', 'meta learned-at', `learned ${submission.learned_at}`));
  }
  if (submission.error_detail) {
    card.append(el('div', 'meta error-detail', submission.error_detail));
  }
  if (submission.confirmation) {
    card.append(
      el(
        'div',
        'meta confirmation',
        `confirmed ${submission.confirmation.label} -> learn #${submission.confirmation.learn_id}`,
      ),
    );
  }
  return card;
}

function renderBanner(error: string | null): HTMLElement | null {
  if (!error) return null;
  return el('div', 'banner retry-banner', `Connection problem: ${error}`);
}

export function renderPatientView(
  root: HTMLElement,
  api: ApiClient,
  feed: SubmissionFeed,
  thumbnails: ThumbnailStore,
): void {
  root.replaceChildren();
  const heading = el('h2', undefined, 'My submissions');
  const form = el('div', 'upload-form');
  const input = el('input') as HTMLInputElement;
  input.type = 'file';
  input.accept = 'image/png,image/x-portable-graymap';
  const button = el('button', 'submit-button', 'Submit X-ray');
  const note = el('div', 'form-note');
  form.append(input, button, note);

  const bannerSlot = el('div', 'banner-slot');
  const cards = el('div', 'cards');
  root.append(heading, form, bannerSlot, cards);

  button.addEventListener('click', async () => {
    const file = input.files?.[0];
    if (!file) {
      note.textContent = 'Choose an image first.';
      return;
    }
    note.textContent = 'Uploading...';
    try {
      const base64 = await fileToBase64(file);
      const id = await api.submitClassify(base64);
      thumbnails.remember(id, `data:image/png;base64,${base64}`);
      note.textContent = `Submitted #${id}.`;
      await feed.refresh();
    } catch (err) {
      note.textContent =
        err instanceof ApiRequestError
          ? `Rejected: ${err.message}`
          : 'Upload failed, the server may be offline. Your file was not lost; retry.';
    }
  });

  feed.subscribe((items, error) => {
    bannerSlot.replaceChildren(...[renderBanner(error)].filter(Boolean) as HTMLElement[]);
    cards.replaceChildren(
      ...items
        .slice()
        .sort((a, b) => b.id - a.id)
        .map((s) => renderCard(s, thumbnails)),
    );
  });
}

export function renderDoctorView(
  root: HTMLElement,
  api: ApiClient,
  feed: SubmissionFeed,
  guard: ConfirmGuard,
): void {
  root.replaceChildren();
  const heading = el('h2', undefined, 'Review queue');
  const bannerSlot = el('div', 'banner-slot');
  const cards = el('div', 'cards');
  root.append(heading, bannerSlot, cards);

  feed.subscribe((items, error) => {
    bannerSlot.replaceChildren(...[renderBanner(error)].filter(Boolean) as HTMLElement[]);
    cards.replaceChildren(
      ...items
        .slice()
        .sort((a, b) => b.id - a.id)
        .map((submission) => {
          const card = renderCard(submission);
          if (submission.type === 'classify' && submission.status === 'classified') {
            card.append(confirmControls(submission, api, feed, guard));
          }
          return card;
        }),
    );
  });
}

function confirmControls(
  submission: SubmissionView,
  api: ApiClient,
  feed: SubmissionFeed,
  guard: ConfirmGuard,
): HTMLElement {
  const row = el('div', 'confirm-row');
  const select = el('select') as HTMLSelectElement;
  for (const label of WIRE_LABELS) {
    const option = el('option', undefined, label) as HTMLOptionElement;
    option.value = label;
    if (submission.prediction && submission.prediction.label === label) {
      option.selected = true;
    }
    select.append(option);
  }
  const button = el('button', 'confirm-button', 'Confirm') as HTMLButtonElement;
  button.disabled = !guard.canConfirm(submission);
  button.addEventListener('click', async () => {
    button.disabled = true;
    try {
      await guard.confirm(api, submission.id, select.value as WireLabel);
      await feed.refresh();
    } catch (err) {
      button.disabled = !guard.canConfirm(submission);
      row.append(
        el(
          'span',
          'confirm-error',
          err instanceof ApiRequestError ? err.message : String(err),
        ),
      );
    }
  });
  row.append(select, button);
  return row;
}

export function renderResearcherView(
  root: HTMLElement,
  api: ApiClient,
  pollMs = 2000,
): () => void {
  root.replaceChildren();
  const heading = el('h2', undefined, 'Service metrics');
  const bannerSlot = el('div', 'banner-slot');
  const dash = el('div', 'dashboard');
  root.append(heading, bannerSlot, dash);

  const draw = (metrics: Metrics) => {
    dash.replaceChildren();
    dash.append(el('div', 'stat', `model ${metrics.model_version}`));
    dash.append(el('div', 'stat queue-depth', `queue depth: ${metrics.queue_depth}`));
    dash.append(el('div', 'stat', `learned updates: ${metrics.learned_count}`));
    for (const kind of ['classify', 'learn'] as const) {
      const s = metrics.latency_ms[kind];
      dash.append(
        el(
          'div',
          `stat latency-${kind}`,
          `${kind}: ${s.count} requests, ${s.mean_ms.toFixed(2)} ms mean ` +
            `(std ${s.std_ms.toFixed(2)})`,
        ),
      );
    }
    if (metrics.benchmark) {
      dash.append(
        el(
          'div',
          'stat benchmark',
          `benchmark ${metrics.benchmark.strategy}: accuracy ` +
            `${metrics.benchmark.avg_accuracy.toFixed(2)}, forgetting ` +
            `${metrics.benchmark.avg_forgetting.toFixed(2)}, overall ` +
            `${metrics.benchmark.overall_performance.toFixed(2)}`,
        ),
      );
      dash.append(sparkline(metrics.benchmark.accuracies));
    } else {
      dash.append(el('div', 'stat empty-state', 'No benchmark report configured.'));
    }
  };

  const poll = async () => {
    try {
      draw(await api.metrics());
      bannerSlot.replaceChildren();
    } catch {
      bannerSlot.replaceChildren(
        el('div', 'banner degraded-banner', 'Metrics unavailable; showing last data.'),
      );
    }
  };
  void poll();
  const timer = setInterval(() => void poll(), pollMs);
  return () => clearInterval(timer);
}

function sparkline(values: number[]): HTMLElement {
  const wrap = el('div', 'sparkline');
  if (values.length === 0) {
    wrap.append(el('span', 'empty-state', 'no accuracy trace'));
    return wrap;
  }
  const w = 240;
  const h = 48;
  const min = Math.min(...values);
  const max = Math.max(...values);
  const span = max - min || 1;
  const points = values
    .map((v, i) => {
      const x = values.length === 1 ? w / 2 : (i / (values.length - 1)) * w;
      const y = h - ((v - min) / span) * (h - 4) - 2;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(' ');
  const svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
  svg.setAttribute('width', String(w));
  svg.setAttribute('height', String(h));
  svg.setAttribute('class', 'accuracy-trace');
  const line = document.createElementNS('http://www.w3.org/2000/svg', 'polyline');
  line.setAttribute('points', points);
  line.setAttribute('fill', 'none');
  line.setAttribute('stroke', 'currentColor');
  line.setAttribute('stroke-width', '2');
  svg.append(line);
  wrap.append(svg);
  return wrap;
}

export function renderLogin(
  root: HTMLElement,
  onLogin: (userId: string, password: string, note: HTMLElement) => void,
): void {
  root.replaceChildren();
  const form = el('div', 'login-form');
  form.append(el('h2', undefined, 'Sign in'));
  const user = el('input') as HTMLInputElement;
  user.placeholder = 'user id';
  user.id = 'login-user';
  const pass = el('input') as HTMLInputElement;
  pass.type = 'password';
  pass.placeholder = 'password';
  pass.id = 'login-pass';
  const button = el('button', 'login-button', 'Log in');
  const note = el('div', 'form-note');
  form.append(user, pass, button, note);
  root.append(form);
  button.addEventListener('click', () => onLogin(user.value, pass.value, note));
}

export function roleForbidden(root: HTMLElement, view: string, session: Session): void {
  root.replaceChildren(
    el('div', 'banner forbidden', `The ${view} view is not available to ${session.role}s.`),
  );
}
