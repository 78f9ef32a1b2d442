import type { GalleryFilter, RecordStatus, RejectReason } from "./types.js";

export const PAGE_SIZE = 60;

/** Filter/page live in the URL query string; no other client persistence. */
export function filterFromQuery(search: string): GalleryFilter {
  const params = new URLSearchParams(search);
  const status = params.get("status") as RecordStatus | null;
  const reason = params.get("reason") as RejectReason | null;
  const page = Math.max(0, Number(params.get("page") ?? "0") || 0);
  return {
    status: status ?? undefined,
    reason: reason ?? undefined,
    page,
    pageSize: PAGE_SIZE,
  };
}

export function queryFromFilter(filter: GalleryFilter): string {
  const params = new URLSearchParams();
  if (filter.status) params.set("status", filter.status);
  if (filter.reason) params.set("reason", filter.reason);
  if (filter.page > 0) params.set("page", String(filter.page));
  const text = params.toString();
  return text ? `?${text}` : "";
}
