import { describe, expect, test } from 'vitest';

import { SubmitQueue } from '../src/submit.js';

function deferred(): { promise: Promise<void>; resolve: () => void } {
  let resolve!: () => void;
  const promise = new Promise<void>((r) => {
    resolve = r;
  });
  return { promise, resolve };
}

describe('SubmitQueue', () => {
  test('sends immediately when idle', async () => {
    const sent: number[] = [];
    const queue = new SubmitQueue<number>(async (n) => {
      sent.push(n);
    });
    await queue.submit(1);
    expect(sent).toEqual([1]);
  });

  test('mid-flight submits queue and supersede each other', async () => {
    const sent: number[] = [];
    const gates: Array<() => void> = [];
    const queue = new SubmitQueue<number>(async (n) => {
      sent.push(n);
      const gate = deferred();
      gates.push(gate.resolve);
      await gate.promise;
    });

    const first = queue.submit(1); // resolves when the queue drains
    expect(queue.busy).toBe(true);
    void queue.submit(2); // queued
    void queue.submit(3); // supersedes 2
    expect(sent).toEqual([1]);

    gates[0]!();
    await new Promise((r) => setTimeout(r, 0)); // let the queued send start
    expect(sent).toEqual([1, 3]); // 2 was never sent
    gates[1]!();
    await first;
    expect(queue.busy).toBe(false);
  });
});
