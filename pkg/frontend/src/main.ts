import { ApiClient, ApiError } from "./api.js";
import {
  GalleryState,
  applyDecision,
  emptyGallery,
  focusedRecord,
  loadPage,
  moveFocus,
  reconcile,
} from "./gallery.js";
import { PAGE_SIZE, filterFromQuery, queryFromFilter } from "./state.js";
import { ThresholdSync } from "./thresholds.js";
import type { Counts, RecordStatus, RecordView } from "./types.js";

const api = new ApiClient();

let gallery: GalleryState = emptyGallery(filterFromQuery(location.search));

const el = {
  grid: document.getElementById("grid") as HTMLElement,
  counts: document.getElementById("counts") as HTMLElement,
  banner: document.getElementById("banner") as HTMLElement,
  filters: document.getElementById("filters") as HTMLElement,
  sliders: document.getElementById("sliders") as HTMLElement,
  pageInfo: document.getElementById("page-info") as HTMLElement,
};

function showBanner(message: string, retry: () => void): void {
  el.banner.innerHTML = "";
  el.banner.classList.remove("hidden");
  el.banner.append(message + " ");
  const button = document.createElement("button");
  button.textContent = "retry";
  button.onclick = () => {
    el.banner.classList.add("hidden");
    retry();
  };
  el.banner.append(button);
}

function scoreBadges(r: RecordView): string {
  const fmt = (v: number | null, digits = 0) =>
    v === null ? "–" : v.toFixed(digits);
  return `
    <span class="badge" title="blur score">b ${fmt(r.blur_score)}</span>
    <span class="badge" title="yaw">y ${fmt(r.yaw, 1)}</span>
    <span class="badge" title="pitch">p ${fmt(r.pitch, 1)}</span>
    <span class="badge" title="face size">s ${fmt(r.face_size)}</span>
    <span class="badge" title="cluster">c ${r.cluster_id}</span>`;
}

function renderGallery(): void {
  el.grid.innerHTML = "";
  gallery.records.forEach((record, index) => {
    const card = document.createElement("div");
    card.className = `card status-${record.status}` +
      (index === gallery.focusIndex ? " focused" : "");
    card.innerHTML = `
      <img src="${record.thumbnail_url}" alt="${record.id}" loading="lazy">
      <div class="meta">
        <span class="rid">${record.id}</span>
        <span class="status">${record.status}${
          record.reject_reason !== "none" ? "/" + record.reject_reason : ""}</span>
      </div>
      <div class="badges">${scoreBadges(record)}</div>`;
    card.onclick = () => {
      gallery = { ...gallery, focusIndex: index };
      renderGallery();
    };
    el.grid.append(card);
  });
  if (gallery.records.length === 0) {
    el.grid.innerHTML = `<p class="empty">no records match this filter</p>`;
  }
  const last = Math.max(0, Math.ceil(gallery.total / PAGE_SIZE) - 1);
  el.pageInfo.textContent =
    `${gallery.total} records · page ${gallery.filter.page + 1}/${last + 1}`;
}

function renderCounts(counts: Counts | null, stale: boolean): void {
  if (counts === null) {
    el.counts.textContent = "counts: –";
    return;
  }
  const reasons = Object.entries(counts.auto_rejected_by_reason)
    .map(([reason, n]) => `${reason} ${n}`)
    .join(", ");
  el.counts.innerHTML =
    `<strong>kept ${counts.kept}</strong> (accepted ${counts.accepted}, ` +
    `pending ${counts.pending}) · rejected ${counts.rejected} · ` +
    `auto: ${reasons}` + (stale ? ` <span class="stale">updating…</span>` : "");
}

async function refreshGallery(): Promise<void> {
  try {
    const page = await api.fetchRecords(gallery.filter);
    gallery = loadPage(gallery, page.records, page.total);
    renderGallery();
  } catch (err) {
    if (err instanceof ApiError && err.status === 0) {
      showBanner("review service unreachable", () => void refreshGallery());
    } else {
      showBanner(String(err), () => void refreshGallery());
    }
  }
}

async function decide(record: RecordView, status: RecordStatus): Promise<void> {
  const { state, undo } = applyDecision(gallery, record.id, status);
  gallery = state;
  renderGallery();
  try {
    const server = await api.postDecision(record.id, status);
    gallery = reconcile(gallery, server);
    renderGallery();
  } catch (err) {
    gallery = undo;  // reconcile failed: restore the pre-optimistic view
    renderGallery();
    showBanner(`decision failed: ${String(err)}`, () => void refreshGallery());
  }
}

function bindKeyboard(): void {
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    const focused = focusedRecord(gallery);
    switch (event.key) {
      case "ArrowRight":
        gallery = moveFocus(gallery, +1);
        renderGallery();
        break;
      case "ArrowLeft":
        gallery = moveFocus(gallery, -1);
        renderGallery();
        break;
      case "a":
        if (focused) void decide(focused, "accepted");
        break;
      case "r":
        if (focused) void decide(focused, "rejected");
        break;
      case "u":
        if (focused) void decide(focused, "pending");
        break;
    }
  });
}

function bindFilters(): void {
  el.filters.querySelectorAll("button[data-status]").forEach((node) => {
    const button = node as HTMLButtonElement;
    button.onclick = () => {
      const status = button.dataset.status || undefined;
      const reason = button.dataset.reason || undefined;
      gallery = emptyGallery({
        status: status as GalleryState["filter"]["status"],
        reason: reason as GalleryState["filter"]["reason"],
        page: 0,
        pageSize: PAGE_SIZE,
      });
      history.replaceState(null, "", queryFromFilter(gallery.filter) || "?");
      void refreshGallery();
    };
  });
}

const SLIDERS: Array<{ field: keyof import("./types.js").Thresholds;
                       label: string; min: number; max: number; step: number }> = [
  { field: "blur_min", label: "blur min", min: 0, max: 1000, step: 5 },
  { field: "yaw_max", label: "yaw max", min: 0, max: 180, step: 1 },
  { field: "pitch_max", label: "pitch max", min: 0, max: 90, step: 1 },
  { field: "size_min", label: "size min", min: 0, max: 512, step: 4 },
];

async function bootstrap(): Promise<void> {
  bindKeyboard();
  bindFilters();
  let summary;
  try {
    summary = await api.fetchSummary();
  } catch {
    showBanner("review service unreachable", () => void bootstrap());
    return;
  }
  const sync = new ThresholdSync(api, summary.thresholds);
  sync.subscribe((state) => {
    renderCounts(state.liveCounts, state.stale);
    if (state.error) {
      showBanner(`thresholds: ${state.error}`, () => void refreshGallery());
    } else {
      void refreshGallery();
    }
  });
  renderCounts(summary.counts, false);

  for (const slider of SLIDERS) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const value = summary.thresholds[slider.field];
    row.innerHTML = `<span>${slider.label}</span>
      <input type="range" min="${slider.min}" max="${slider.max}" step="${slider.step}"
             value="${value}">
      <output>${value}</output>`;
    const input = row.querySelector("input") as HTMLInputElement;
    const output = row.querySelector("output") as HTMLOutputElement;
    input.oninput = () => {
      output.value = input.value;
      sync.setValue(slider.field, Number(input.value));
    };
    el.sliders.append(row);
  }

  await refreshGallery();
}

void bootstrap();
