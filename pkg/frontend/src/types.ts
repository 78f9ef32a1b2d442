export type RecordStatus = "pending" | "auto_rejected" | "accepted" | "rejected";

export type RejectReason =
  | "blur"
  | "pose"
  | "size"
  | "identity_cluster"
  | "duplicate"
  | "manual"
  | "none";

/** Mirrors the service's record JSON exactly; scores are never derived client-side. */
export interface RecordView {
  id: string;
  image_path: string;
  blur_score: number | null;
  yaw: number | null;
  pitch: number | null;
  face_size: number | null;
  cluster_id: number;
  status: RecordStatus;
  reject_reason: RejectReason;
  thumbnail_url: string;
  image_url: string;
}

export interface RecordPage {
  total: number;
  offset: number;
  records: RecordView[];
}

export interface Thresholds {
  blur_min: number;
  yaw_max: number;
  pitch_max: number;
  size_min: number;
  dedup_hamming_max: number;
}

export interface Counts {
  accepted: number;
  pending: number;
  rejected: number;
  auto_rejected: number;
  kept: number;
  auto_rejected_by_reason: Record<string, number>;
}

export interface ThresholdResponse {
  thresholds: Thresholds;
  counts: Counts;
}

export interface Summary {
  identity: string;
  thresholds: Thresholds;
  kept_clusters: number[];
  counts: Counts;
  kept_band_ok: boolean;
}

export interface GalleryFilter {
  status?: RecordStatus;
  reason?: RejectReason;
  page: number;
  pageSize: number;
}
