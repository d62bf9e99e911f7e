/**
 * Wire types for the annotation server's JSON API.
 *
 * These mirror the server's task view and submission contract exactly.
 * Note what is absent: the task view carries no ground truth and no
 * control kind, so nothing in client state can leak an answer key.
 */

export interface EvidencePassage {
  idx: number;
  text: string;
  is_target: boolean;
}

export interface TaskPayload {
  task_id: string;
  claim_id: string;
  claim: string;
  veracity: string;
  evidence: EvidencePassage[];
  sentences: string[];
}

// POST body for /api/tasks/{id}/annotation; the server rejects unknown
// or missing fields, so this shape must be emitted verbatim.
export interface SubmissionBody {
  prediction: number[];
  none_selected: boolean;
  utility: number | null;
}

export interface AnnotatorProgress {
  annotator_id: string;
  completed: number;
  controls_answered: number;
  control_accuracy: number;
  status: string;
}

export interface ProgressPayload {
  tasks: { total: number; completed: number; open: number };
  controls: { total: number };
  coverage: { target: number; mean: number; per_task: Record<string, number> };
  annotators: AnnotatorProgress[];
}

export function isTaskPayload(value: unknown): value is TaskPayload {
  if (typeof value !== 'object' || value === null) return false;
  const v = value as Record<string, unknown>;
  return (
    typeof v.task_id === 'string' &&
    typeof v.claim === 'string' &&
    typeof v.veracity === 'string' &&
    Array.isArray(v.evidence) &&
    Array.isArray(v.sentences) &&
    v.sentences.every((s) => typeof s === 'string')
  );
}
