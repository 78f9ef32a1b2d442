import type { GalleryFilter, RecordStatus, RecordView } from "./types.js";

export interface GalleryState {
  records: RecordView[];
  total: number;
  focusIndex: number;
  filter: GalleryFilter;
}

export function emptyGallery(filter: GalleryFilter): GalleryState {
  return { records: [], total: 0, focusIndex: 0, filter };
}

export function loadPage(
  state: GalleryState,
  records: RecordView[],
  total: number,
): GalleryState {
  return {
    ...state,
    records,
    total,
    focusIndex: Math.min(state.focusIndex, Math.max(records.length - 1, 0)),
  };
}

export function moveFocus(state: GalleryState, delta: number): GalleryState {
  if (state.records.length === 0) return state;
  const next = Math.min(Math.max(state.focusIndex + delta, 0), state.records.length - 1);
  return { ...state, focusIndex: next };
}

function matchesFilter(record: RecordView, filter: GalleryFilter): boolean {
  if (filter.status && record.status !== filter.status) return false;
  if (filter.reason && record.reject_reason !== filter.reason) return false;
  return true;
}

/**
 * Optimistic decision: the record is updated (and dropped from the view if it
 * no longer matches the filter) without waiting for the server.  Returns the
 * new state plus an undo snapshot for reconciliation.
 */
export function applyDecision(
  state: GalleryState,
  id: string,
  status: RecordStatus,
): { state: GalleryState; undo: GalleryState } {
  const undo = state;
  const updated: RecordView[] = [];
  for (const record of state.records) {
    if (record.id !== id) {
      updated.push(record);
      continue;
    }
    const next: RecordView = {
      ...record,
      status,
      reject_reason: status === "rejected" ? "manual" : "none",
    };
    if (matchesFilter(next, state.filter)) updated.push(next);
  }
  const total = state.total - (state.records.length - updated.length);
  const focusIndex = Math.min(state.focusIndex, Math.max(updated.length - 1, 0));
  return { state: { ...state, records: updated, total, focusIndex }, undo };
}

/** Server response reconciliation: replace the optimistic record if present. */
export function reconcile(state: GalleryState, server: RecordView): GalleryState {
  const records = state.records
    .map((r) => (r.id === server.id ? server : r))
    .filter((r) => matchesFilter(r, state.filter));
  return { ...state, records };
}

export function focusedRecord(state: GalleryState): RecordView | null {
  return state.records[state.focusIndex] ?? null;
}
