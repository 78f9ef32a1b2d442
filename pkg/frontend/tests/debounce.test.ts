import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce.js";

describe("debounce", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("fires once with the latest arguments after the quiet period", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 250);
    fn(1);
    fn(2);
    fn(3);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(249);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([3]);
  });

  it("scripted slider scrubbing issues at most 1 call per 250ms window", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 250);
    // scrub: an event every 30ms for 3 seconds (100 events)
    for (let i = 0; i < 100; i++) {
      fn(i);
      vi.advanceTimersByTime(30);
    }
    // still scrubbing: no window of 250ms quiet has elapsed
    expect(calls.length).toBe(0);
    vi.advanceTimersByTime(250);
    expect(calls).toEqual([99]);
    // bursty scrubbing with pauses: one call per pause, never more
    for (let burst = 0; burst < 5; burst++) {
      for (let i = 0; i < 10; i++) {
        fn(burst * 100 + i);
        vi.advanceTimersByTime(20);
      }
      vi.advanceTimersByTime(300); // pause longer than the window
    }
    expect(calls.length).toBe(1 + 5);
  });

  it("cancel drops the pending call", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 250);
    fn(7);
    fn.cancel();
    vi.advanceTimersByTime(1000);
    expect(calls).toEqual([]);
  });

  it("flush runs the pending call immediately", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 250);
    fn(9);
    fn.flush();
    expect(calls).toEqual([9]);
    vi.advanceTimersByTime(1000);
    expect(calls).toEqual([9]); // no double fire
  });
});
