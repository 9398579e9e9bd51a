// Application wiring: poll the session, apply it to the view model, render.
// User actions are the only producers of POSTs that change the session;
// in particular /api/session/print is issued exclusively from a candidate
// tap, never from the polling path.

import { ApiClient, type SessionDoc } from './api.js';
import { Poller } from './poller.js';
import { initialViewModel, POLL_INTERVAL_MS, type ViewModel } from './viewmodel.js';
import { render, type Handlers } from './render.js';

export class KioskApp {
  readonly vm: ViewModel = initialViewModel();
  readonly poller: Poller;
  private readonly handlers: Handlers;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    pollIntervalMs: number = POLL_INTERVAL_MS,
  ) {
    this.handlers = {
      onTapTile: (classId) => void this.tapTile(classId),
      onTapCandidate: (classId) => void this.tapCandidate(classId),
      onCancel: () => void this.cancel(),
      onSearch: (query) => void this.search(query),
      onRetry: () => void this.retry(),
    };
    this.poller = new Poller(pollIntervalMs, () => this.tick(), () => {
      this.vm.pollFailed = true;
      this.render();
    });
  }

  async start(): Promise<void> {
    try {
      this.vm.catalog = await this.api.getCatalog();
      this.vm.labelCount = (await this.api.getLabels()).length;
      this.vm.pollFailed = false;
    } catch {
      this.vm.pollFailed = true;
      this.render();
    }
    this.poller.start();
  }

  stop(): void {
    this.poller.stop();
  }

  private applySession(session: SessionDoc): void {
    const previous = this.vm.session;
    if (previous && previous.state !== session.state) {
      // leaving a state clears transient UI artifacts
      this.vm.hint = null;
      this.vm.searchResults = null;
      this.vm.searchQuery = '';
    }
    this.vm.session = session;
  }

  private async tick(): Promise<void> {
    const session = await this.api.getSession();
    this.applySession(session);
    this.vm.pollFailed = false;
    this.render();
  }

  render(): void {
    render(this.root, this.vm, this.handlers);
  }

  // -- user actions ----------------------------------------------------------

  async tapTile(classId: number): Promise<void> {
    if (this.vm.session?.state === 'presenting') {
      await this.api.select(classId);
    } else {
      this.vm.hint = 'Place your item on the scale first';
    }
    this.render();
  }

  async tapCandidate(classId: number): Promise<void> {
    // the explicit print request: select, then print, in that order
    const selected = await this.api.select(classId);
    if (selected.status !== 200) {
      return;
    }
    const printed = await this.api.print();
    if (printed.status === 200) {
      try {
        this.vm.labelCount = (await this.api.getLabels()).length;
      } catch {
        // footer count refreshes on the next successful fetch
      }
    }
    this.render();
  }

  async cancel(): Promise<void> {
    await this.api.cancel();
  }

  async search(query: string): Promise<void> {
    this.vm.searchQuery = query;
    this.vm.searchResults = query.trim() === '' ? null : await this.api.search(query);
    this.render();
  }

  async retry(): Promise<void> {
    await this.start();
  }
}
