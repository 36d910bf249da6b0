// Single-flight submission queue: at most one score request is in flight;
// a submit arriving mid-flight is queued and supersedes any earlier
// queued submit (only the freshest pending form state is sent).

export type SubmitFn<T> = (payload: T) => Promise<void>;

export class SubmitQueue<T> {
  private readonly send: SubmitFn<T>;
  private inFlight = false;
  private pending: T | null = null;

  constructor(send: SubmitFn<T>) {
    this.send = send;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  async submit(payload: T): Promise<void> {
    if (this.inFlight) {
      this.pending = payload;
      return;
    }
    this.inFlight = true;
    try {
      await this.send(payload);
    } finally {
      this.inFlight = false;
      if (this.pending !== null) {
        const next = this.pending;
        this.pending = null;
        await this.submit(next);
      }
    }
  }
}
