/** Console session state, persisted per browser tab.
 *
 * When any call comes back 401 (expired or revoked token) the shell clears
 * the session and routes to login, but the current filter draft is parked
 * first so the user resumes where they left off.
 */

import type { PrincipalInfo } from "./api.js";
import type { FilterDraft } from "./filters.js";

export interface ConsoleSession {
  token: string;
  principal: PrincipalInfo;
  activeSchema: string | null;
}

const SESSION_KEY = "retadms.session";
const DRAFT_KEY = "retadms.draftFilter";

function storage(): Storage | null {
  return typeof sessionStorage === "undefined" ? null : sessionStorage;
}

export function saveSession(session: ConsoleSession): void {
  storage()?.setItem(SESSION_KEY, JSON.stringify(session));
}

export function loadSession(): ConsoleSession | null {
  const raw = storage()?.getItem(SESSION_KEY);
  if (!raw) return null;
  try {
    return JSON.parse(raw) as ConsoleSession;
  } catch {
    return null;
  }
}

export function clearSession(): void {
  storage()?.removeItem(SESSION_KEY);
}

export function parkDraftFilter(schemaid: string, draft: FilterDraft): void {
  storage()?.setItem(DRAFT_KEY, JSON.stringify({ schemaid, draft }));
}

export function takeDraftFilter(schemaid: string): FilterDraft | null {
  const raw = storage()?.getItem(DRAFT_KEY);
  if (!raw) return null;
  try {
    const parked = JSON.parse(raw) as { schemaid: string; draft: FilterDraft };
    if (parked.schemaid !== schemaid) return null;
    storage()?.removeItem(DRAFT_KEY);
    return parked.draft;
  } catch {
    return null;
  }
}
