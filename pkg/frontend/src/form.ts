// Form state for the schema-driven patient entry form.
//
// Every control starts blank and a blank control always submits an
// explicit null -- the service treats missingness as signal, so the UI
// must never invent a default (and in particular never turn blank into 0).

import type { FeatureMap, SchemaFeature, SchemaResponse } from './api.js';

export const UNKNOWN_OPTION = '';

export interface FormField {
  feature: SchemaFeature;
  raw: string; // control text; '' means unknown/blank
  dirty: boolean;
}

export interface FieldError {
  name: string;
  message: string;
}

export class FormModel {
  readonly fields = new Map<string, FormField>();

  constructor(schema: SchemaResponse) {
    for (const feature of schema.features) {
      this.fields.set(feature.name, { feature, raw: '', dirty: false });
    }
  }

  get size(): number {
    return this.fields.size;
  }

  field(name: string): FormField {
    const field = this.fields.get(name);
    if (!field) {
      throw new Error(`unknown form field: ${name}`);
    }
    return field;
  }

  setValue(name: string, raw: string): void {
    const field = this.field(name);
    field.raw = raw;
    field.dirty = true;
  }

  clear(name: string): void {
    this.setValue(name, '');
  }

  validate(): FieldError[] {
    const errors: FieldError[] = [];
    for (const field of this.fields.values()) {
      const raw = field.raw.trim();
      if (raw === '') {
        continue;
      }
      if (field.feature.kind === 'continuous') {
        if (!Number.isFinite(Number(raw))) {
          errors.push({
            name: field.feature.name,
            message: 'must be a number or left blank',
          });
        }
      } else if (
        field.feature.categories &&
        !field.feature.categories.includes(raw)
      ) {
        errors.push({
          name: field.feature.name,
          message: 'must be one of the known categories or unknown',
        });
      }
    }
    return errors;
  }

  // Blank controls submit explicit null, never 0 or ''.
  toFeatureMap(): FeatureMap {
    const features: FeatureMap = {};
    for (const field of this.fields.values()) {
      const raw = field.raw.trim();
      if (raw === '') {
        features[field.feature.name] = null;
      } else if (field.feature.kind === 'continuous') {
        features[field.feature.name] = Number(raw);
      } else {
        features[field.feature.name] = raw;
      }
    }
    return features;
  }

  enteredCount(): number {
    let count = 0;
    for (const field of this.fields.values()) {
      if (field.raw.trim() !== '') {
        count += 1;
      }
    }
    return count;
  }
}
