/**
 * Typed client for the adjudication service HTTP+JSON API.
 *
 * The fetch implementation is injectable so tests can run against a mock
 * transport and the browser build uses the global fetch unchanged.
 */

export type ItemKind = 'race_no_majority' | 'gender_tie' | 'dob_review';
export type ItemStatus = 'pending' | 'decided';

export interface EvidenceRecord {
  image_id: string;
  arrest_date: string;
  gender: string;
  race: string;
  dob: string;
  image_path: string;
}

export interface Evidence {
  records: EvidenceRecord[];
  counts?: Record<string, number>;
  image_urls?: string[];
}

export interface AdjudicationItem {
  item_id: string;
  subject_id: string;
  kind: ItemKind;
  evidence: Evidence;
  status: ItemStatus;
  decision: string | null;
  decided_at: string | null;
  decided_by: string | null;
  allowed_values: string[];
}

export interface ItemPage {
  items: AdjudicationItem[];
  total: number;
  page: number;
  page_size: number;
}

export interface Summary {
  by_kind: Record<string, { pending: number; decided: number }>;
  total: number;
  pending: number;
  log_hash: string;
}

export interface DecisionAck {
  item: AdjudicationItem;
  log_hash: string;
}

/** Error carrying the HTTP status and the parsed body detail. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`service returned ${status}`);
    this.name = 'ApiError';
  }

  /** 422 bodies list the values the server would accept. */
  allowedValues(): string[] {
    const d = this.detail as { allowed_values?: string[] } | undefined;
    return d?.allowed_values ?? [];
  }

  /** 409 bodies carry the decision already on file. */
  existingDecision(): string | null {
    const d = this.detail as { decision?: string } | undefined;
    return d?.decision ?? null;
  }
}

/** Raised when the transport itself fails (service down, network drop). */
export class ConnectionError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
    this.name = 'ConnectionError';
  }
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (...args) =>
      fetch(...(args as Parameters<typeof fetch>)),
  ) {}

  private async request<T>(
    path: string,
    init?: { method?: string; body?: unknown },
  ): Promise<T> {
    let response: Awaited<ReturnType<FetchLike>>;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method: init?.method ?? 'GET',
        headers: { 'Content-Type': 'application/json' },
        body: init?.body === undefined ? undefined : JSON.stringify(init.body),
      });
    } catch (err) {
      throw new ConnectionError(err);
    }
    const body = (await response.json().catch(() => null)) as {
      detail?: unknown;
    } | null;
    if (!response.ok) {
      throw new ApiError(response.status, body?.detail ?? body);
    }
    return body as T;
  }

  listItems(status?: ItemStatus, page = 1, pageSize = 50): Promise<ItemPage> {
    const params = new URLSearchParams({
      page: String(page),
      page_size: String(pageSize),
    });
    if (status) params.set('status', status);
    return this.request<ItemPage>(`/items?${params.toString()}`);
  }

  getItem(itemId: string): Promise<AdjudicationItem> {
    return this.request<AdjudicationItem>(`/items/${encodeURIComponent(itemId)}`);
  }

  submitDecision(
    itemId: string,
    decision: string,
    annotator: string,
    override = false,
  ): Promise<DecisionAck> {
    return this.request<DecisionAck>(
      `/items/${encodeURIComponent(itemId)}/decision`,
      { method: 'POST', body: { decision, annotator, override } },
    );
  }

  summary(): Promise<Summary> {
    return this.request<Summary>('/summary');
  }
}
