/**
 * DOM rendering for the annotation screens.
 *
 * Rendering is a pure function of (task, selection state, ui flags); every
 * interaction re-renders the whole task card.  The task payloads are small
 * enough that diffing would buy nothing.
 */

import type { TaskPayload } from './schema.js';
import type { SelectionState } from './state.js';
import { canSubmit } from './state.js';

export interface TaskHandlers {
  onToggle(position: number): void;
  onNoneToggle(): void;
  onUtility(value: number): void;
  onSubmit(): void;
}

export interface UiFlags {
  submitting: boolean;
  error: string | null;
  // footer line, e.g. completed-task count
  note: string | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function clear(root: HTMLElement): void {
  while (root.firstChild) root.removeChild(root.firstChild);
}

function claimCard(task: TaskPayload): HTMLElement {
  const card = el('section', 'claim-card');
  const head = el('div', 'claim-head');
  head.appendChild(el('span', 'claim-label', 'Claim'));
  const badge = el('span', 'veracity', task.veracity);
  badge.dataset.veracity = task.veracity;
  head.appendChild(badge);
  card.appendChild(head);
  card.appendChild(el('p', 'claim-text', task.claim));
  return card;
}

// Target passage pinned first and highlighted; the rest stay visible in
// their original order for context.
function evidenceList(task: TaskPayload): HTMLElement {
  const section = el('section', 'evidence');
  section.appendChild(el('h2', undefined, 'Evidence'));
  const ordered = [...task.evidence].sort(
    (a, b) => Number(b.is_target) - Number(a.is_target) || a.idx - b.idx,
  );
  for (const passage of ordered) {
    const item = el('div', passage.is_target ? 'passage target' : 'passage');
    item.dataset.idx = String(passage.idx);
    const label = passage.is_target ? `[${passage.idx}] target passage` : `[${passage.idx}]`;
    item.appendChild(el('span', 'passage-idx', label));
    item.appendChild(el('p', 'passage-text', passage.text));
    section.appendChild(item);
  }
  return section;
}

function sentenceList(
  task: TaskPayload,
  state: SelectionState,
  handlers: TaskHandlers,
): HTMLElement {
  const section = el('section', 'sentences');
  section.appendChild(el('h2', undefined, 'Explanation sentences'));
  section.appendChild(
    el(
      'p',
      'hint',
      'Select every sentence that should cite the target passage, or the option below if none should.',
    ),
  );
  const list = el('ol', 'sentence-list');
  task.sentences.forEach((sentence, position) => {
    const item = el('li');
    const button = el('button', 'sentence', sentence);
    button.type = 'button';
    button.dataset.pos = String(position);
    button.setAttribute('aria-pressed', String(state.selected.has(position)));
    button.disabled = state.noneSelected;
    button.addEventListener('click', () => handlers.onToggle(position));
    item.appendChild(button);
    list.appendChild(item);
  });
  section.appendChild(list);

  const none = el('button', 'none-option', 'No sentence should cite the target passage');
  none.type = 'button';
  none.setAttribute('aria-pressed', String(state.noneSelected));
  none.addEventListener('click', () => handlers.onNoneToggle());
  section.appendChild(none);
  return section;
}

function utilityControl(state: SelectionState, handlers: TaskHandlers): HTMLElement {
  const section = el('section', 'utility');
  section.appendChild(el('h2', undefined, 'Explanation utility'));
  section.appendChild(
    el('p', 'hint', 'How helpful is the explanation in judging the claim? 0 = useless, 100 = decisive.'),
  );
  const row = el('div', 'utility-row');
  const slider = el('input', 'utility-slider');
  slider.type = 'range';
  slider.min = '0';
  slider.max = '100';
  slider.step = '1';
  slider.value = String(state.utility ?? 50);
  slider.addEventListener('input', () => handlers.onUtility(Number(slider.value)));
  row.appendChild(slider);
  row.appendChild(
    el('span', 'utility-value', state.utility === null ? 'not rated yet' : String(state.utility)),
  );
  section.appendChild(row);
  return section;
}

export function renderTask(
  root: HTMLElement,
  task: TaskPayload,
  state: SelectionState,
  flags: UiFlags,
  handlers: TaskHandlers,
): void {
  clear(root);
  const card = el('article', 'task');
  card.dataset.taskId = task.task_id;
  card.appendChild(claimCard(task));
  card.appendChild(evidenceList(task));
  card.appendChild(sentenceList(task, state, handlers));
  card.appendChild(utilityControl(state, handlers));

  const footer = el('div', 'submit-row');
  const submit = el('button', 'submit', flags.submitting ? 'Submitting…' : 'Submit answer');
  submit.type = 'button';
  submit.disabled = flags.submitting || !canSubmit(state);
  submit.addEventListener('click', () => handlers.onSubmit());
  footer.appendChild(submit);
  if (flags.error) {
    footer.appendChild(el('span', 'status error', flags.error));
  } else if (!canSubmit(state)) {
    footer.appendChild(
      el('span', 'status', 'Pick sentences or the none-option, then rate the utility.'),
    );
  }
  card.appendChild(footer);
  if (flags.note) card.appendChild(el('p', 'note', flags.note));
  root.appendChild(card);
  root.dataset.screen = 'task';
}

export function renderEmpty(root: HTMLElement, note: string | null): void {
  clear(root);
  const card = el('article', 'notice');
  card.appendChild(el('h2', undefined, 'All caught up'));
  card.appendChild(
    el('p', undefined, 'No tasks are available for you right now. Check back later.'),
  );
  if (note) card.appendChild(el('p', 'note', note));
  root.appendChild(card);
  root.dataset.screen = 'empty';
}

export function renderDisqualified(root: HTMLElement): void {
  clear(root);
  const card = el('article', 'notice');
  card.appendChild(el('h2', undefined, 'No further tasks'));
  card.appendChild(
    el(
      'p',
      undefined,
      'Your session has ended and no more tasks will be assigned to this annotator id.',
    ),
  );
  root.appendChild(card);
  root.dataset.screen = 'disqualified';
}

export function renderFatal(root: HTMLElement, message: string): void {
  clear(root);
  const card = el('article', 'notice');
  card.appendChild(el('h2', undefined, 'Something went wrong'));
  card.appendChild(el('p', 'status error', message));
  root.appendChild(card);
  root.dataset.screen = 'error';
}

/** Entry form shown when no annotator id was supplied via the URL. */
export function renderGate(root: HTMLElement, onEnter: (annotator: string) => void): void {
  clear(root);
  const card = el('article', 'notice gate');
  card.appendChild(el('h2', undefined, 'Enter your annotator id'));
  const form = el('form', 'gate-form');
  const input = el('input', 'gate-input');
  input.type = 'text';
  input.placeholder = 'e.g. ann-042';
  input.setAttribute('aria-label', 'annotator id');
  const go = el('button', 'gate-go', 'Start annotating');
  go.type = 'submit';
  form.appendChild(input);
  form.appendChild(go);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const value = input.value.trim();
    if (value) onEnter(value);
  });
  card.appendChild(form);
  root.appendChild(card);
  root.dataset.screen = 'gate';
}
