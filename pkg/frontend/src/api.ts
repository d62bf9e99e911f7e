/**
 * Thin fetch client for the annotation server.
 *
 * All paths are relative to a base URL; the production bundle is served
 * by the same process as the API, so the base is empty there.
 */

import type { ProgressPayload, SubmissionBody, TaskPayload } from './schema.js';
import { isTaskPayload } from './schema.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

export type NextTaskResult =
  | { kind: 'task'; task: TaskPayload }
  | { kind: 'empty' }
  | { kind: 'disqualified' };

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === 'string') return body.detail;
  } catch {
    // non-JSON error body, fall through to the status text
  }
  return response.statusText || 'request failed';
}

export async function fetchNextTask(base: string, annotator: string): Promise<NextTaskResult> {
  const response = await fetch(`${base}/api/tasks/next?annotator=${encodeURIComponent(annotator)}`);
  if (response.status === 204) return { kind: 'empty' };
  if (response.status === 403) return { kind: 'disqualified' };
  if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
  const payload: unknown = await response.json();
  if (!isTaskPayload(payload)) {
    throw new ApiError(response.status, 'malformed task payload');
  }
  return { kind: 'task', task: payload };
}

export async function submitAnnotation(
  base: string,
  taskId: string,
  annotator: string,
  body: SubmissionBody,
): Promise<void> {
  const response = await fetch(
    `${base}/api/tasks/${encodeURIComponent(taskId)}/annotation?annotator=${encodeURIComponent(annotator)}`,
    {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    },
  );
  if (response.status !== 201) {
    throw new ApiError(response.status, await errorDetail(response));
  }
}

export async function fetchProgress(base: string): Promise<ProgressPayload> {
  const response = await fetch(`${base}/api/progress`);
  if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
  return (await response.json()) as ProgressPayload;
}
