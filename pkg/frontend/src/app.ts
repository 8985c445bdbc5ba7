// Application bootstrap: login, then mount the role's workflow. Routes are
// gated by the role carried in the session; the patient and doctor views run
// the 2-second submission poll, the researcher view polls /metrics.

import { ApiClient, ApiRequestError } from './api.js';
import { ConfirmGuard, SessionStore, SubmissionFeed, ThumbnailStore } from './state.js';
import {
  renderDoctorView,
  renderLogin,
  renderPatientView,
  renderResearcherView,
  roleForbidden,
} from './views.js';

export function startApp(root: HTMLElement, baseUrl: string): void {
  const api = new ApiClient(baseUrl);
  const sessions = new SessionStore(api);
  const feed = new SubmissionFeed(api);
  const guard = new ConfirmGuard();
  const thumbnails = new ThumbnailStore();
  let stopMetrics: (() => void) | null = null;

  const mount = () => {
    const session = sessions.session;
    if (!session) {
      renderLogin(root, async (userId, password, note) => {
        note.textContent = 'Signing in...';
        try {
          await sessions.login(userId, password);
          note.textContent = '';
          mount();
        } catch (err) {
          note.textContent =
            err instanceof ApiRequestError ? err.message : 'Server unreachable.';
        }
      });
      return;
    }
    feed.stop();
    stopMetrics?.();
    if (session.role === 'patient') {
      renderPatientView(root, api, feed, thumbnails);
      feed.start();
    } else if (session.role === 'doctor') {
      renderDoctorView(root, api, feed, guard);
      feed.start();
    } else if (session.role === 'researcher') {
      stopMetrics = renderResearcherView(root, api);
    } else {
      roleForbidden(root, 'requested', session);
    }
  };

  mount();
}
