import type {
  GalleryFilter,
  RecordPage,
  RecordStatus,
  RecordView,
  Summary,
  Thresholds,
  ThresholdResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }

  get isBusy(): boolean {
    return this.status === 409;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the review service's /api endpoints. */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  recordsUrl(filter: GalleryFilter): string {
    const params = new URLSearchParams();
    if (filter.status) params.set("status", filter.status);
    if (filter.reason) params.set("reason", filter.reason);
    params.set("offset", String(filter.page * filter.pageSize));
    params.set("limit", String(filter.pageSize));
    return `/api/records?${params.toString()}`;
  }

  fetchRecords(filter: GalleryFilter): Promise<RecordPage> {
    return this.request<RecordPage>(this.recordsUrl(filter));
  }

  fetchRecord(id: string): Promise<RecordView> {
    return this.request<RecordView>(`/api/records/${encodeURIComponent(id)}`);
  }

  postDecision(id: string, status: RecordStatus): Promise<RecordView> {
    return this.request<RecordView>(
      `/api/records/${encodeURIComponent(id)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ status }),
      },
    );
  }

  putThresholds(values: Partial<Thresholds>): Promise<ThresholdResponse> {
    return this.request<ThresholdResponse>("/api/thresholds", {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(values),
    });
  }

  fetchSummary(): Promise<Summary> {
    return this.request<Summary>("/api/summary");
  }
}
