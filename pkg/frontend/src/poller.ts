// Fixed-interval polling loop. Fires once immediately on start so the UI
// paints without waiting a full interval; errors go to onError and polling
// continues.

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly intervalMs: number,
    private readonly task: () => Promise<void>,
    private readonly onError: (error: unknown) => void = () => {},
  ) {}

  get running(): boolean {
    return this.timer !== null;
  }

  start(): void {
    if (this.timer !== null) {
      return;
    }
    const run = () => this.task().catch(this.onError);
    run();
    this.timer = setInterval(run, this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
