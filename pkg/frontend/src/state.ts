/**
 * Session state for the adjudication loop.
 *
 * Pure application logic: the store fetches through ApiClient, keeps the
 * queue and the open case, and exposes submit/retry transitions.  Every
 * displayed count comes from a server response — nothing is fabricated
 * locally; mutations trigger a refetch for reconciliation.
 */

import {
  AdjudicationItem,
  ApiClient,
  ApiError,
  ConnectionError,
  ItemKind,
  Summary,
} from './api.js';

export interface FormState {
  decision: string | null;
  annotator: string;
  override: boolean;
}

export type Notice =
  | { kind: 'none' }
  | { kind: 'already-decided'; decision: string | null }
  | { kind: 'invalid-value'; allowed: string[] }
  | { kind: 'connection-lost' }
  | { kind: 'retry-available' };

export interface SessionState {
  queue: AdjudicationItem[];
  summary: Summary | null;
  current: AdjudicationItem | null;
  form: FormState;
  notice: Notice;
  busy: boolean;
}

export type Listener = (state: SessionState) => void;

const emptyForm = (): FormState => ({
  decision: null,
  annotator: '',
  override: false,
});

export class SessionStore {
  private state: SessionState = {
    queue: [],
    summary: null,
    current: null,
    form: emptyForm(),
    notice: { kind: 'none' },
    busy: false,
  };
  private listeners: Listener[] = [];
  private pendingSubmit: { itemId: string; form: FormState } | null = null;

  constructor(private readonly api: ApiClient) {}

  getState(): SessionState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private set(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  pendingCountByKind(): Record<string, number> {
    const byKind = this.state.summary?.by_kind ?? {};
    const counts: Record<string, number> = {};
    for (const [kind, c] of Object.entries(byKind)) counts[kind] = c.pending;
    return counts;
  }

  /** Reload the pending queue and summary from the service. */
  async refresh(): Promise<void> {
    try {
      const [page, summary] = await Promise.all([
        this.api.listItems('pending', 1, 200),
        this.api.summary(),
      ]);
      this.set({ queue: page.items, summary, notice: { kind: 'none' } });
    } catch (err) {
      if (err instanceof ConnectionError) {
        this.set({ notice: { kind: 'connection-lost' } });
        return;
      }
      throw err;
    }
  }

  async openCase(itemId: string): Promise<void> {
    const item = await this.api.getItem(itemId);
    this.set({ current: item, form: emptyForm(), notice: { kind: 'none' } });
  }

  openNextPending(): Promise<void> | void {
    const next = this.state.queue.find(
      (i) => i.item_id !== this.state.current?.item_id,
    );
    if (next) return this.openCase(next.item_id);
    this.set({ current: null, form: emptyForm() });
  }

  setDecision(value: string): void {
    this.set({ form: { ...this.state.form, decision: value } });
  }

  setAnnotator(value: string): void {
    this.set({ form: { ...this.state.form, annotator: value } });
  }

  setOverride(value: boolean): void {
    this.set({ form: { ...this.state.form, override: value } });
  }

  canSubmit(): boolean {
    return (
      this.state.current !== null &&
      this.state.form.decision !== null &&
      !this.state.busy
    );
  }

  /**
   * Submit the open case's decision.  Error responses keep the form
   * intact so the annotator can correct and resubmit; transport failures
   * arm a retry that re-sends the same payload exactly once per attempt.
   */
  async submit(): Promise<boolean> {
    const item = this.state.current;
    const form = this.state.form;
    if (!item || form.decision === null || this.state.busy) return false;
    return this.send(item.item_id, form);
  }

  /** Re-send the payload captured when the connection dropped. */
  async retry(): Promise<boolean> {
    if (!this.pendingSubmit) return false;
    const { itemId, form } = this.pendingSubmit;
    return this.send(itemId, form);
  }

  private async send(itemId: string, form: FormState): Promise<boolean> {
    this.set({ busy: true });
    try {
      await this.api.submitDecision(
        itemId,
        form.decision as string,
        form.annotator || 'anonymous',
        form.override,
      );
      this.pendingSubmit = null;
      this.set({ busy: false, form: emptyForm(), notice: { kind: 'none' } });
      await this.refresh();
      await this.openNextPending();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.pendingSubmit = null;
        this.set({
          busy: false,
          notice: { kind: 'already-decided', decision: err.existingDecision() },
        });
        return false;
      }
      if (err instanceof ApiError && err.status === 422) {
        this.pendingSubmit = null;
        this.set({
          busy: false,
          notice: { kind: 'invalid-value', allowed: err.allowedValues() },
        });
        return false;
      }
      if (err instanceof ConnectionError) {
        this.pendingSubmit = { itemId, form };
        this.set({ busy: false, notice: { kind: 'retry-available' } });
        return false;
      }
      this.set({ busy: false });
      throw err;
    }
  }
}

/** Static guidance shown beside race cases. */
export const PERCEPTION_HELP: Record<ItemKind, string> = {
  race_no_majority:
    'Judge from the full image set; eye and nose regions carry the most ' +
    'reliable cues. Be aware of other-race effect bias in your own ' +
    'perception; choose Other/unclear (O) when the evidence is ambiguous.',
  gender_tie:
    'Compare the conflicting records against all images for the subject.',
  dob_review:
    'Pick the birthdate best supported by the arrest-date sequence.',
};
