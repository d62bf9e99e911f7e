/**
 * Application controller: one annotator session per tab.
 *
 * Holds the current task and selection state, re-renders on every
 * interaction, and optimistically fetches the next task as soon as a
 * submission is acknowledged.
 */

import { ApiError, fetchNextTask, submitAnnotation } from './api.js';
import type { TaskPayload } from './schema.js';
import type { SelectionState } from './state.js';
import { canSubmit, initialState, setNone, setUtility, submissionBody, toggleSentence } from './state.js';
import {
  renderDisqualified,
  renderEmpty,
  renderFatal,
  renderGate,
  renderTask,
  type TaskHandlers,
} from './view.js';

export interface AppOptions {
  // API base URL; empty when the bundle is served by the API process
  base?: string;
  annotator?: string;
  // when false, a task may be submitted without touching the slider
  requireUtility?: boolean;
}

const STORAGE_KEY = 'annotator-id';

function storedAnnotator(): string | null {
  try {
    return window.localStorage.getItem(STORAGE_KEY);
  } catch {
    return null;
  }
}

function rememberAnnotator(id: string): void {
  try {
    window.localStorage.setItem(STORAGE_KEY, id);
  } catch {
    // storage may be unavailable; the session still works
  }
}

function annotatorFromUrl(): string | null {
  const value = new URLSearchParams(window.location.search).get('annotator');
  return value && value.trim() ? value.trim() : null;
}

class Session {
  private task: TaskPayload | null = null;
  private state: SelectionState = initialState(0);
  private submitting = false;
  private error: string | null = null;
  private completed = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly base: string,
    private readonly annotator: string,
    private readonly requireUtility: boolean,
  ) {}

  async start(): Promise<void> {
    await this.loadNext();
  }

  private get handlers(): TaskHandlers {
    return {
      onToggle: (position) => {
        this.state = toggleSentence(this.state, position);
        this.error = null;
        this.draw();
      },
      onNoneToggle: () => {
        this.state = setNone(this.state, !this.state.noneSelected);
        this.error = null;
        this.draw();
      },
      onUtility: (value) => {
        this.state = setUtility(this.state, value);
        this.draw();
      },
      onSubmit: () => {
        void this.submit();
      },
    };
  }

  private note(): string {
    return `Signed in as ${this.annotator} · ${this.completed} submitted`;
  }

  private draw(): void {
    if (this.task === null) return;
    renderTask(
      this.root,
      this.task,
      this.state,
      { submitting: this.submitting, error: this.error, note: this.note() },
      this.handlers,
    );
  }

  private async loadNext(): Promise<void> {
    try {
      const result = await fetchNextTask(this.base, this.annotator);
      if (result.kind === 'empty') {
        this.task = null;
        renderEmpty(this.root, this.note());
        return;
      }
      if (result.kind === 'disqualified') {
        this.task = null;
        renderDisqualified(this.root);
        return;
      }
      this.task = result.task;
      this.state = initialState(result.task.sentences.length);
      this.submitting = false;
      this.error = null;
      this.draw();
    } catch (err) {
      renderFatal(this.root, err instanceof Error ? err.message : String(err));
    }
  }

  private async submit(): Promise<void> {
    // double-submit guard: the button is disabled while in flight, and
    // re-entry is rejected here as well
    if (this.task === null || this.submitting) return;
    if (!canSubmit(this.state, this.requireUtility)) {
      this.error = 'Pick sentences or the none-option, then rate the utility.';
      this.draw();
      return;
    }
    this.submitting = true;
    this.error = null;
    this.draw();
    try {
      await submitAnnotation(this.base, this.task.task_id, this.annotator, submissionBody(this.state));
      this.completed += 1;
      await this.loadNext();
    } catch (err) {
      this.submitting = false;
      if (err instanceof ApiError && err.status === 403) {
        this.task = null;
        renderDisqualified(this.root);
        return;
      }
      if (err instanceof ApiError && err.status === 409) {
        // already recorded server-side; move on
        await this.loadNext();
        return;
      }
      this.error = err instanceof Error ? err.message : String(err);
      this.draw();
    }
  }
}

export function startApp(root: HTMLElement, opts: AppOptions = {}): void {
  const base = opts.base ?? '';
  const requireUtility = opts.requireUtility ?? true;
  const annotator = opts.annotator ?? annotatorFromUrl() ?? storedAnnotator();
  if (!annotator) {
    renderGate(root, (entered) => {
      rememberAnnotator(entered);
      void new Session(root, base, entered, requireUtility).start();
    });
    return;
  }
  rememberAnnotator(annotator);
  void new Session(root, base, annotator, requireUtility).start();
}
