/**
 * End-to-end tests against a live annotation server: the real UI drives
 * real HTTP, and assertions read the records the server persisted.
 */

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { afterEach, describe, expect, it } from 'vitest';

import { fetchNextTask, fetchProgress, submitAnnotation } from '../src/api.js';
import { startApp } from '../src/main.js';
import type { TaskPayload } from '../src/schema.js';
import { startFixtureServer, type FixtureServer } from './server.js';

const live: FixtureServer[] = [];

async function start(): Promise<FixtureServer> {
  const server = await startFixtureServer();
  live.push(server);
  return server;
}

afterEach(() => {
  for (const server of live) server.stop();
  live.length = 0;
  document.body.innerHTML = '';
  window.localStorage.clear();
});

function mount(): HTMLElement {
  const root = document.createElement('div');
  document.body.appendChild(root);
  return root;
}

async function until(cond: () => boolean, what: string, timeoutMs = 10_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 25));
  }
}

function currentTaskId(root: HTMLElement): string | undefined {
  return root.querySelector<HTMLElement>('article.task')?.dataset.taskId;
}

function sentenceButtons(root: HTMLElement): HTMLButtonElement[] {
  return [...root.querySelectorAll<HTMLButtonElement>('button.sentence')];
}

function setSlider(root: HTMLElement, value: number): void {
  const slider = root.querySelector<HTMLInputElement>('input.utility-slider')!;
  slider.value = String(value);
  slider.dispatchEvent(new Event('input'));
}

function storedRecords(server: FixtureServer, annotator: string): Record<string, unknown>[] {
  const path = join(server.annotationsDir, `${annotator}.jsonl`);
  return readFileSync(path, 'utf-8')
    .split('\n')
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line) as Record<string, unknown>);
}

function taskOf(result: Awaited<ReturnType<typeof fetchNextTask>>): TaskPayload {
  if (result.kind !== 'task') throw new Error(`expected a task, got ${result.kind}`);
  return result.task;
}

describe('annotation round trip', () => {
  it('stores exactly the record the annotator entered', async () => {
    const server = await start();
    const root = mount();
    startApp(root, { base: server.base, annotator: 'walker' });
    await until(() => root.dataset.screen === 'task', 'first task');
    expect(currentTaskId(root)).toBe('a1:mask1');

    sentenceButtons(root)[0]!.click();
    sentenceButtons(root)[2]!.click();
    setSlider(root, 80);
    root.querySelector<HTMLButtonElement>('button.submit')!.click();
    await until(
      () => root.dataset.screen === 'task' && currentTaskId(root) !== 'a1:mask1',
      'next task after submit',
    );

    const records = storedRecords(server, 'walker');
    expect(records.length).toBe(1);
    const { timestamp, ...record } = records[0]!;
    expect(record).toEqual({
      task_id: 'a1:mask1',
      annotator_id: 'walker',
      annotator_kind: 'human',
      prediction: [0, 2],
      utility: 80,
      raw_output: null,
      parse_failed: false,
    });
    expect(typeof timestamp).toBe('string');
    expect(timestamp).toBeTruthy();
  });

  it('enforces none-option exclusivity all the way to the stored record', async () => {
    const server = await start();
    const root = mount();
    startApp(root, { base: server.base, annotator: 'nonly' });
    await until(() => root.dataset.screen === 'task', 'first task');

    // select a sentence, then engage the none-option: the selection must
    // be cleared and the buttons disabled
    sentenceButtons(root)[1]!.click();
    expect(sentenceButtons(root)[1]!.getAttribute('aria-pressed')).toBe('true');
    root.querySelector<HTMLButtonElement>('button.none-option')!.click();
    for (const button of sentenceButtons(root)) {
      expect(button.disabled).toBe(true);
      expect(button.getAttribute('aria-pressed')).toBe('false');
    }

    setSlider(root, 15);
    const firstTask = currentTaskId(root);
    root.querySelector<HTMLButtonElement>('button.submit')!.click();
    await until(() => currentTaskId(root) !== firstTask, 'next task after submit');

    const records = storedRecords(server, 'nonly');
    expect(records.length).toBe(1);
    expect(records[0]!.prediction).toEqual([]);
    expect(records[0]!.utility).toBe(15);
  });
});

describe('control scoring', () => {
  it('scores a negative control correct on none and incorrect on a selection', async () => {
    const server = await start();
    const base = server.base;

    // cadence is every 2nd dispensation, so task 2 is a control
    const scoredA = taskOf(await fetchNextTask(base, 'negA'));
    expect(server.tasks[scoredA.task_id]!.control_kind).toBe('none');
    await submitAnnotation(base, scoredA.task_id, 'negA', {
      prediction: [0],
      none_selected: false,
      utility: 50,
    });
    const controlA = taskOf(await fetchNextTask(base, 'negA'));
    expect(server.tasks[controlA.task_id]!.control_kind).toBe('negative');
    await submitAnnotation(base, controlA.task_id, 'negA', {
      prediction: [],
      none_selected: true,
      utility: 10,
    });

    const scoredB = taskOf(await fetchNextTask(base, 'negB'));
    await submitAnnotation(base, scoredB.task_id, 'negB', {
      prediction: [0],
      none_selected: false,
      utility: 50,
    });
    const controlB = taskOf(await fetchNextTask(base, 'negB'));
    expect(server.tasks[controlB.task_id]!.control_kind).toBe('negative');
    await submitAnnotation(base, controlB.task_id, 'negB', {
      prediction: [1],
      none_selected: false,
      utility: 10,
    });

    const progress = await fetchProgress(base);
    const rowA = progress.annotators.find((a) => a.annotator_id === 'negA')!;
    const rowB = progress.annotators.find((a) => a.annotator_id === 'negB')!;
    expect(rowA.controls_answered).toBe(1);
    expect(rowA.control_accuracy).toBe(1);
    expect(rowA.status).toBe('active');
    expect(rowB.controls_answered).toBe(1);
    expect(rowB.control_accuracy).toBe(0);
    expect(rowB.status).toBe('active'); // below the minimum control count
  });

  it('disqualifies an annotator at 60% control accuracy and stops serving them', async () => {
    const server = await start();
    const base = server.base;
    let controlsSeen = 0;

    // five scored tasks and five controls alternate; answer the first
    // three controls correctly and the last two wrong: 3/5 = 60%
    for (let i = 0; i < 10; i++) {
      const task = taskOf(await fetchNextTask(base, 'sloppy'));
      const key = server.tasks[task.task_id]!;
      let body;
      if (key.control_kind === 'none') {
        body = { prediction: [0], none_selected: false, utility: 50 };
      } else {
        controlsSeen += 1;
        const correct = controlsSeen <= 3;
        if (key.control_kind === 'negative') {
          body = correct
            ? { prediction: [], none_selected: true, utility: 50 }
            : { prediction: [0], none_selected: false, utility: 50 };
        } else {
          body = correct
            ? { prediction: key.ground_truth, none_selected: false, utility: 50 }
            : { prediction: [], none_selected: true, utility: 50 };
        }
      }
      await submitAnnotation(base, task.task_id, 'sloppy', body);
    }
    expect(controlsSeen).toBe(5);

    const progress = await fetchProgress(base);
    const row = progress.annotators.find((a) => a.annotator_id === 'sloppy')!;
    expect(row.controls_answered).toBe(5);
    expect(row.control_accuracy).toBeCloseTo(0.6, 12);
    expect(row.status).toBe('disqualified');

    // the API refuses further work
    expect((await fetchNextTask(base, 'sloppy')).kind).toBe('disqualified');

    // and the UI lands on the terminal screen
    const root = mount();
    startApp(root, { base, annotator: 'sloppy' });
    await until(() => root.dataset.screen === 'disqualified', 'disqualified screen');
  });
});

describe('static bundle', () => {
  it('serves the built UI from the annotation server', async () => {
    const server = await start();
    const page = await fetch(`${server.base}/`);
    expect(page.status).toBe(200);
    const html = await page.text();
    expect(html).toContain('./assets/boot.js');
    const script = await fetch(`${server.base}/assets/boot.js`);
    expect(script.status).toBe(200);
    expect(await script.text()).toContain('startApp');
  });
});
