import type { ProductDoc, SessionDoc, SessionState } from './api.js';

export const POLL_INTERVAL_MS = 250;

export type UiPhase = 'default_page' | 'identifying' | 'results' | 'printed' | 'error';

// Total mapping: every session state lands in exactly one phase. A failed
// poll or catalog load overrides everything with the error phase.
const PHASE_BY_STATE: Record<SessionState, UiPhase> = {
  idle: 'default_page',
  weighing: 'identifying',
  classifying: 'identifying',
  presenting: 'results',
  printed: 'printed',
};

export function phaseForState(state: SessionState, pollFailed: boolean): UiPhase {
  if (pollFailed) {
    return 'error';
  }
  return PHASE_BY_STATE[state];
}

export interface ViewModel {
  session: SessionDoc | null;
  catalog: ProductDoc[];
  searchResults: ProductDoc[] | null;
  searchQuery: string;
  pollFailed: boolean;
  labelCount: number;
  hint: string | null;
}

export function initialViewModel(): ViewModel {
  return {
    session: null,
    catalog: [],
    searchResults: null,
    searchQuery: '',
    pollFailed: false,
    labelCount: 0,
    hint: null,
  };
}

export function currentPhase(vm: ViewModel): UiPhase {
  if (vm.pollFailed || vm.session === null) {
    return 'error';
  }
  return phaseForState(vm.session.state, false);
}

// Progress text shown while the machine works; one distinct line per state
// so every transition produces a visible change.
export function progressText(state: SessionState): string {
  switch (state) {
    case 'weighing':
      return 'Weighing…';
    case 'classifying':
      return 'Identifying…';
    default:
      return '';
  }
}
