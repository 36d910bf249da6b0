// Result view model and submission history for what-if comparison.
//
// The view stores service probabilities verbatim; any rounding happens
// only at display time. History keeps the last 20 submissions client-side
// so consecutive submissions can be compared without re-querying.

import type { FeatureMap, ScoreResponse, TaskScore } from './api.js';

export const HISTORY_LIMIT = 20;

export interface Submission {
  features: FeatureMap;
  response: ScoreResponse;
  at: number;
}

export interface TaskView {
  task: string;
  probability: number; // exactly the service value
  operatingThreshold: number;
  triageFlag: boolean;
  attributions: TaskScore['attributions'];
  attributionDegenerate: boolean;
  deltaVsPrevious: number | null;
}

export interface ResultView {
  tasks: TaskView[];
  allMissing: boolean;
  attributionBasis: string;
}

export class SessionHistory {
  private readonly entries: Submission[] = [];

  push(submission: Submission): void {
    this.entries.push(submission);
    while (this.entries.length > HISTORY_LIMIT) {
      this.entries.shift();
    }
  }

  get length(): number {
    return this.entries.length;
  }

  last(): Submission | null {
    return this.entries.length ? this.entries[this.entries.length - 1]! : null;
  }

  all(): readonly Submission[] {
    return this.entries;
  }
}

export function buildResultView(
  response: ScoreResponse,
  previous: ScoreResponse | null,
): ResultView {
  const tasks: TaskView[] = [];
  for (const task of Object.keys(response.tasks).sort()) {
    const entry = response.tasks[task]!;
    const prior = previous?.tasks[task];
    tasks.push({
      task,
      probability: entry.probability,
      operatingThreshold: entry.operating_threshold,
      triageFlag: entry.triage_flag,
      attributions: entry.attributions,
      attributionDegenerate: entry.attribution_degenerate,
      deltaVsPrevious: prior ? entry.probability - prior.probability : null,
    });
  }
  return {
    tasks,
    allMissing: response.all_missing,
    attributionBasis: response.attribution_basis,
  };
}

// Display helpers; the underlying values stay exact in the view model.
export function formatProbability(value: number): string {
  return `${(100 * value).toFixed(1)}%`;
}

export function formatDelta(value: number | null): string {
  if (value === null) {
    return '';
  }
  if (value === 0) {
    return '+0.0pp';
  }
  const pp = 100 * value;
  return `${pp >= 0 ? '+' : ''}${pp.toFixed(1)}pp`;
}
