// Browser bindings: render the schema-driven form and the result panel.
// All numbers shown come from the view models; no scoring happens here.

import type { SchemaFeature } from './api.js';
import { FormModel, UNKNOWN_OPTION } from './form.js';
import type { ResultView } from './results.js';
import { formatDelta, formatProbability } from './results.js';

export function renderBanner(container: HTMLElement, message: string, onRetry: () => void): void {
  container.innerHTML = '';
  const banner = document.createElement('div');
  banner.className = 'banner error';
  banner.textContent = message;
  const retry = document.createElement('button');
  retry.textContent = 'Retry';
  retry.addEventListener('click', onRetry);
  banner.appendChild(retry);
  container.appendChild(banner);
}

function controlFor(feature: SchemaFeature, model: FormModel): HTMLElement {
  const wrapper = document.createElement('label');
  wrapper.className = `field ${feature.kind}`;
  const title = document.createElement('span');
  title.textContent = feature.units ? `${feature.name} (${feature.units})` : feature.name;
  wrapper.appendChild(title);

  if (feature.kind === 'discrete' && feature.categories) {
    const select = document.createElement('select');
    select.name = feature.name;
    const unknown = document.createElement('option');
    unknown.value = UNKNOWN_OPTION;
    unknown.textContent = '(unknown)';
    select.appendChild(unknown);
    for (const category of feature.categories) {
      const option = document.createElement('option');
      option.value = category;
      option.textContent = category;
      select.appendChild(option);
    }
    select.addEventListener('change', () => model.setValue(feature.name, select.value));
    wrapper.appendChild(select);
  } else {
    const input = document.createElement('input');
    input.type = 'text';
    input.name = feature.name;
    input.placeholder = 'unknown';
    input.addEventListener('input', () => model.setValue(feature.name, input.value));
    wrapper.appendChild(input);
  }
  const error = document.createElement('span');
  error.className = 'field-error';
  error.dataset.for = feature.name;
  wrapper.appendChild(error);
  return wrapper;
}

export function renderForm(
  container: HTMLElement,
  model: FormModel,
  onSubmit: () => void,
): void {
  container.innerHTML = '';
  const groups: Record<string, HTMLElement> = {};
  for (const kind of ['continuous', 'discrete']) {
    const section = document.createElement('section');
    const heading = document.createElement('h3');
    heading.textContent = kind === 'continuous' ? 'Measurements' : 'Categorical findings';
    section.appendChild(heading);
    groups[kind] = section;
    container.appendChild(section);
  }
  for (const field of model.fields.values()) {
    groups[field.feature.kind]!.appendChild(controlFor(field.feature, model));
  }
  const submit = document.createElement('button');
  submit.id = 'submit';
  submit.textContent = 'Score patient';
  submit.addEventListener('click', onSubmit);
  container.appendChild(submit);
}

export function showFieldError(container: HTMLElement, name: string, message: string): void {
  const slot = container.querySelector<HTMLElement>(`[data-for="${CSS.escape(name)}"]`);
  if (slot) {
    slot.textContent = message;
  }
}

export function clearFieldErrors(container: HTMLElement): void {
  for (const slot of container.querySelectorAll<HTMLElement>('.field-error')) {
    slot.textContent = '';
  }
}

export function renderResults(container: HTMLElement, view: ResultView): void {
  container.innerHTML = '';
  if (view.allMissing) {
    const note = document.createElement('p');
    note.className = 'note';
    note.textContent = 'All inputs unknown: scores reflect the fully-imputed record.';
    container.appendChild(note);
  }
  for (const task of view.tasks) {
    const panel = document.createElement('article');
    panel.className = `task ${task.triageFlag ? 'flagged' : 'clear'}`;
    const heading = document.createElement('h3');
    heading.textContent = task.task;
    panel.appendChild(heading);

    const gauge = document.createElement('div');
    gauge.className = 'gauge';
    const fill = document.createElement('div');
    fill.className = 'gauge-fill';
    fill.style.width = `${100 * task.probability}%`;
    gauge.appendChild(fill);
    const marker = document.createElement('div');
    marker.className = 'threshold-marker';
    marker.style.left = `${100 * task.operatingThreshold}%`;
    marker.title = `operating threshold ${formatProbability(task.operatingThreshold)}`;
    gauge.appendChild(marker);
    panel.appendChild(gauge);

    const readout = document.createElement('p');
    readout.className = 'readout';
    readout.dataset.probability = String(task.probability);
    const delta = formatDelta(task.deltaVsPrevious);
    readout.textContent =
      `${formatProbability(task.probability)} ` +
      `${task.triageFlag ? 'TRIAGE' : 'below threshold'}` +
      (delta ? ` (${delta} vs previous)` : '');
    panel.appendChild(readout);

    const bars = document.createElement('ul');
    bars.className = 'attributions';
    for (const attribution of task.attributions) {
      const item = document.createElement('li');
      const bar = document.createElement('span');
      bar.className = attribution.delta >= 0 ? 'bar up' : 'bar down';
      bar.style.width = `${Math.abs(100 * attribution.delta)}%`;
      item.appendChild(bar);
      const label = document.createElement('span');
      label.textContent = `${attribution.feature} (${(100 * attribution.delta).toFixed(1)}%)`;
      item.appendChild(label);
      bars.appendChild(item);
    }
    panel.appendChild(bars);
    container.appendChild(panel);
  }
}
