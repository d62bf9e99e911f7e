/**
 * Pure selection state for one recovery task.
 *
 * The one invariant that matters: a non-empty sentence selection and the
 * none-option are mutually exclusive, mirroring the server's rule that a
 * submission carries exactly one of the two.  Engaging the none-option
 * clears the selection; while it is engaged, sentence toggles are inert.
 */

import type { SubmissionBody } from './schema.js';

export interface SelectionState {
  readonly sentenceCount: number;
  readonly selected: ReadonlySet<number>;
  readonly noneSelected: boolean;
  // null until the annotator touches the slider
  readonly utility: number | null;
}

export function initialState(sentenceCount: number): SelectionState {
  if (!Number.isInteger(sentenceCount) || sentenceCount < 0) {
    throw new RangeError(`sentence count must be a non-negative integer, got ${sentenceCount}`);
  }
  return { sentenceCount, selected: new Set(), noneSelected: false, utility: null };
}

/** Flip one sentence's membership in the selection; inert while the
 * none-option is engaged (the controls are disabled then anyway). */
export function toggleSentence(state: SelectionState, position: number): SelectionState {
  if (!Number.isInteger(position) || position < 0 || position >= state.sentenceCount) {
    throw new RangeError(`sentence position ${position} outside [0, ${state.sentenceCount})`);
  }
  if (state.noneSelected) return state;
  const selected = new Set(state.selected);
  if (selected.has(position)) {
    selected.delete(position);
  } else {
    selected.add(position);
  }
  return { ...state, selected };
}

export function setNone(state: SelectionState, engaged: boolean): SelectionState {
  if (engaged === state.noneSelected) return state;
  return { ...state, noneSelected: engaged, selected: engaged ? new Set() : state.selected };
}

export function setUtility(state: SelectionState, value: number): SelectionState {
  if (!Number.isFinite(value)) throw new RangeError(`utility must be finite, got ${value}`);
  const clamped = Math.min(100, Math.max(0, value));
  return { ...state, utility: clamped };
}

/** An answer exists: some sentences are selected or the none-option is
 * engaged, never both. */
export function hasAnswer(state: SelectionState): boolean {
  return (state.selected.size > 0) !== state.noneSelected;
}

export function canSubmit(state: SelectionState, requireUtility = true): boolean {
  if (!hasAnswer(state)) return false;
  if (requireUtility && state.utility === null) return false;
  return true;
}

/** Serialize for the wire; the field set must match the server contract
 * exactly, extras are rejected. */
export function submissionBody(state: SelectionState): SubmissionBody {
  if (!hasAnswer(state)) {
    throw new Error('nothing chosen: select sentences or the none-option first');
  }
  return {
    prediction: [...state.selected].sort((a, b) => a - b),
    none_selected: state.noneSelected,
    utility: state.utility,
  };
}
