import { ApiClient, ApiError } from "./api.js";
import { debounce, Debounced } from "./debounce.js";
import type { Counts, Thresholds } from "./types.js";

export interface ThresholdPanelState {
  values: Thresholds;
  /** Server-reported counts; the client never recomputes them. */
  liveCounts: Counts | null;
  /** True while the displayed counts lag behind the slider values. */
  stale: boolean;
  error: string | null;
}

export type ThresholdListener = (state: ThresholdPanelState) => void;

const RETRY_BASE_MS = 300;
const MAX_RETRIES = 4;

/**
 * Funnels slider movement into debounced PUT /thresholds calls and republishes
 * the server's counts. A 409 (writer busy) retries with exponential backoff
 * while the panel shows a stale badge.
 */
export class ThresholdSync {
  readonly state: ThresholdPanelState;
  private readonly push: Debounced<[]>;
  private listeners: ThresholdListener[] = [];
  private inflight = 0;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly api: ApiClient,
    initial: Thresholds,
    debounceMs = 250,
  ) {
    this.state = { values: { ...initial }, liveCounts: null, stale: false, error: null };
    this.push = debounce(() => void this.send(), debounceMs);
  }

  subscribe(listener: ThresholdListener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  /** Slider/input change: updates local value, schedules a debounced PUT. */
  setValue(field: keyof Thresholds, value: number): void {
    this.state.values[field] = value;
    this.state.stale = true;
    this.emit();
    this.push();
  }

  private async send(attempt = 0): Promise<void> {
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    const snapshot = { ...this.state.values };
    this.inflight += 1;
    try {
      const res = await this.api.putThresholds(snapshot);
      this.state.liveCounts = res.counts;
      this.state.error = null;
      // still stale if the sliders moved while the request was in flight
      this.state.stale = !thresholdsEqual(this.state.values, snapshot);
      this.emit();
    } catch (err) {
      if (err instanceof ApiError && err.isBusy && attempt < MAX_RETRIES) {
        const delay = RETRY_BASE_MS * 2 ** attempt;
        this.retryTimer = setTimeout(() => void this.send(attempt + 1), delay);
      } else {
        this.state.error = err instanceof Error ? err.message : String(err);
        this.state.stale = true;
        this.emit();
      }
    } finally {
      this.inflight -= 1;
    }
  }
}

export function thresholdsEqual(a: Thresholds, b: Thresholds): boolean {
  return (
    a.blur_min === b.blur_min &&
    a.yaw_max === b.yaw_max &&
    a.pitch_max === b.pitch_max &&
    a.size_min === b.size_min &&
    a.dedup_hamming_max === b.dedup_hamming_max
  );
}
