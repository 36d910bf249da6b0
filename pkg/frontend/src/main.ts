// Entry point: fetch the schema, render the form, score on demand.
// The service base address comes from ?service=... (default: same origin).

import { ApiClient, ServiceError } from './api.js';
import { clearFieldErrors, renderBanner, renderForm, renderResults, showFieldError } from './dom.js';
import { FormModel } from './form.js';
import { buildResultView, SessionHistory } from './results.js';
import { SubmitQueue } from './submit.js';

function serviceBase(): string {
  const param = new URLSearchParams(window.location.search).get('service');
  return param ?? window.location.origin;
}

async function boot(): Promise<void> {
  const formHost = document.getElementById('form')!;
  const resultsHost = document.getElementById('results')!;
  const client = new ApiClient(serviceBase());
  let schema;
  try {
    schema = await client.getSchema();
  } catch (err) {
    renderBanner(formHost, `scoring service unreachable: ${String(err)}`, () => void boot());
    return;
  }
  if (!schema.features.length) {
    renderBanner(formHost, 'service schema lists no features', () => void boot());
    return;
  }

  const model = new FormModel(schema);
  const history = new SessionHistory();

  const queue = new SubmitQueue<Record<string, number | string | null>>(async (features) => {
    try {
      const previous = history.last();
      const response = await client.score(features);
      history.push({ features, response, at: Date.now() });
      renderResults(resultsHost, buildResultView(response, previous?.response ?? null));
    } catch (err) {
      if (err instanceof ServiceError && err.key) {
        showFieldError(formHost, err.key, err.message);
      } else {
        renderBanner(resultsHost, String(err), () => void boot());
      }
    }
  });

  renderForm(formHost, model, () => {
    clearFieldErrors(formHost);
    const errors = model.validate();
    if (errors.length) {
      for (const error of errors) {
        showFieldError(formHost, error.name, error.message);
      }
      return;
    }
    void queue.submit(model.toFeatureMap());
  });
}

void boot();
