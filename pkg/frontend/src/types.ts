// Wire types mirroring the screening-service JSON API.

export type Role = 'patient' | 'doctor' | 'researcher';

export type WireLabel = 'COVID-19' | 'Normal' | 'Pneumonia';

export const WIRE_LABELS: WireLabel[] = ['COVID-19', 'Normal', 'Pneumonia'];

export type SubmissionStatus =
  | 'queued'
  | 'processing'
  | 'classified'
  | 'learned'
  | 'rejected'
  | 'failed';

export const TERMINAL_STATUSES: SubmissionStatus[] = [
  'classified',
  'learned',
  'rejected',
  'failed',
];

export interface Prediction {
  label: WireLabel;
  probabilities: Record<WireLabel, number>;
  validator_confidence: number;
}

export interface SubmissionView {
  id: number;
  submitter?: string; // absent on researcher (anonymized) views
  type: 'classify' | 'learn';
  status: SubmissionStatus;
  label: WireLabel | null;
  prediction: Prediction | null;
  created_at: string;
  processed_at: string | null;
  learned_at: string | null;
  error_detail: string | null;
  confirmation: {
    doctor: string;
    label: WireLabel;
    learn_id: number;
    at: string;
  } | null;
}

export interface Session {
  token: string;
  role: Role;
  patients: string[];
}

export interface LatencyStats {
  count: number;
  mean_ms: number;
  std_ms: number;
}

export interface Metrics {
  queue_depth: number;
  model_version: string;
  learned_count: number;
  latency_ms: {
    classify: LatencyStats;
    learn: LatencyStats;
    total_samples: number;
  };
  status_counts: Record<string, number>;
  benchmark: {
    strategy: string;
    avg_accuracy: number;
    avg_forgetting: number;
    overall_performance: number;
    avg_eval_time_ms: number;
    accuracies: number[];
  } | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
