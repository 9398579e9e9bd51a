// DOM construction for each UI phase. Pure functions of the view model plus
// a handler bundle; the app re-renders on every poll tick so any state
// change is visible within one tick.
//
// Layout notes: the header is deliberately flat (no rounded corners, not
// tappable-looking), the background plain, labels large. A cancel control
// is rendered in every non-idle phase.

import type { LabelDoc, ProductDoc, SessionDoc } from './api.js';
import { currentPhase, progressText, type UiPhase, type ViewModel } from './viewmodel.js';

export interface Handlers {
  onTapTile(classId: number): void;
  onTapCandidate(classId: number): void;
  onCancel(): void;
  onSearch(query: string): void;
  onRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function header(): HTMLElement {
  const bar = el('header', 'topbar');
  bar.appendChild(el('span', 'topbar-title', 'Produce checkout'));
  return bar;
}

function cancelButton(handlers: Handlers): HTMLElement {
  const button = el('button', 'cancel-button', 'Cancel / Start over');
  button.dataset.action = 'cancel';
  button.addEventListener('click', () => handlers.onCancel());
  return button;
}

function searchBox(vm: ViewModel, handlers: Handlers): HTMLElement {
  const wrap = el('div', 'search');
  const input = el('input', 'search-input');
  input.type = 'search';
  input.placeholder = 'Search products';
  input.value = vm.searchQuery;
  input.addEventListener('input', () => handlers.onSearch(input.value));
  wrap.appendChild(input);
  return wrap;
}

function productTile(product: ProductDoc, handlers: Handlers): HTMLElement {
  const tile = el('button', 'tile');
  tile.dataset.action = 'tile';
  tile.dataset.classId = String(product.class_id);
  tile.appendChild(el('span', 'tile-name', product.name));
  tile.appendChild(el('span', 'tile-price', `${product.price_per_kg} / kg`));
  tile.addEventListener('click', () => handlers.onTapTile(product.class_id));
  return tile;
}

function renderDefaultPage(root: HTMLElement, vm: ViewModel, handlers: Handlers): void {
  const banner = el('div', 'banner instruction-banner', 'Place your item on the scale');
  root.appendChild(banner);
  root.appendChild(searchBox(vm, handlers));
  if (vm.hint) {
    root.appendChild(el('div', 'hint', vm.hint));
  }
  const grid = el('div', 'grid');
  const products = vm.searchResults ?? vm.catalog.filter((p) => p.frequent);
  for (const product of products) {
    grid.appendChild(productTile(product, handlers));
  }
  root.appendChild(grid);
}

function renderIdentifying(root: HTMLElement, vm: ViewModel, handlers: Handlers): void {
  const session = vm.session as SessionDoc;
  const status = el('div', 'progress-text', progressText(session.state));
  status.setAttribute('role', 'status');
  root.appendChild(status);
  root.appendChild(el('div', 'spinner'));
  if (session.weight_g !== null) {
    root.appendChild(el('div', 'weight-readout', `${session.weight_g.toFixed(0)} g`));
  }
  if (session.error_note) {
    root.appendChild(el('div', 'error-note', session.error_note));
  }
  root.appendChild(cancelButton(handlers));
}

function candidateCard(
  product: ProductDoc,
  big: boolean,
  handlers: Handlers,
): HTMLElement {
  const card = el('button', big ? 'card card-primary' : 'card card-secondary');
  card.dataset.action = 'candidate';
  card.dataset.classId = String(product.class_id);
  card.appendChild(el('span', 'card-name', product.name));
  card.appendChild(el('span', 'card-price', `${product.price_per_kg} / kg`));
  card.appendChild(el('span', 'card-print', 'Tap to print label'));
  card.addEventListener('click', () => handlers.onTapCandidate(product.class_id));
  return card;
}

function renderResults(root: HTMLElement, vm: ViewModel, handlers: Handlers): void {
  const session = vm.session as SessionDoc;
  root.appendChild(el('div', 'banner', 'Is this your item?'));
  if (session.error_note) {
    root.appendChild(el('div', 'error-note', session.error_note));
  }
  const list = el('div', 'cards');
  session.candidates.forEach((candidate, index) => {
    list.appendChild(candidateCard(candidate, index === 0, handlers));
  });
  root.appendChild(list);
  root.appendChild(el('div', 'banner-small', 'Not your item? Search for it:'));
  root.appendChild(searchBox(vm, handlers));
  if (vm.searchResults) {
    const grid = el('div', 'grid grid-small');
    for (const product of vm.searchResults) {
      grid.appendChild(candidateCard(product, false, handlers));
    }
    root.appendChild(grid);
  }
  root.appendChild(cancelButton(handlers));
}

function renderPrinted(root: HTMLElement, vm: ViewModel, handlers: Handlers): void {
  const label = (vm.session as SessionDoc).label as LabelDoc;
  root.appendChild(el('div', 'banner banner-done', 'Label printed — take your label'));
  const ticket = el('div', 'ticket');
  ticket.appendChild(el('div', 'ticket-name', label.name));
  ticket.appendChild(el('div', 'ticket-weight', `${label.weight_g.toFixed(0)} g`));
  ticket.appendChild(el('div', 'ticket-unit', `${label.price_per_kg} / kg`));
  ticket.appendChild(el('div', 'ticket-total', label.total_price));
  root.appendChild(ticket);
  root.appendChild(el('div', 'banner-small', 'Remove your item to finish'));
  root.appendChild(cancelButton(handlers));
  root.appendChild(el('footer', 'debug-footer', `labels printed: ${vm.labelCount}`));
}

function renderError(root: HTMLElement, handlers: Handlers): void {
  root.appendChild(el('div', 'banner banner-error', 'Connection lost — showing stale data'));
  const retry = el('button', 'retry-button', 'Retry');
  retry.dataset.action = 'retry';
  retry.addEventListener('click', () => handlers.onRetry());
  root.appendChild(retry);
}

export function render(root: HTMLElement, vm: ViewModel, handlers: Handlers): UiPhase {
  const phase = currentPhase(vm);
  root.textContent = '';
  root.appendChild(header());
  const main = el('main', `screen screen-${phase}`);
  root.appendChild(main);
  switch (phase) {
    case 'default_page':
      renderDefaultPage(main, vm, handlers);
      break;
    case 'identifying':
      renderIdentifying(main, vm, handlers);
      break;
    case 'results':
      renderResults(main, vm, handlers);
      break;
    case 'printed':
      renderPrinted(main, vm, handlers);
      break;
    case 'error':
      renderError(main, handlers);
      break;
  }
  return phase;
}
