import { ApiClient, ApiError } from "./api.js";
import type { MedicationIn } from "./types.js";

/** Default formulary; deployments can override the list in the settings. */
export const DEFAULT_FORMULARY = [
  "cough syrup",
  "ibuprofen",
  "acetaminophen",
  "dexamethasone",
  "hydroxychloroquine",
  "chloroquine",
  "remdesivir",
];

export interface MedicationFormState {
  name: string;
  start: string;
  end: string;
  dosage_note: string;
}

/** Client-side validation; an empty result means the form may be submitted. */
export function validateMedicationForm(form: MedicationFormState, formulary: string[] = DEFAULT_FORMULARY): string[] {
  const errors: string[] = [];
  if (!form.name) {
    errors.push("medication name is required");
  } else if (!formulary.includes(form.name)) {
    errors.push(`'${form.name}' is not in the formulary`);
  }
  if (!form.start || Number.isNaN(Date.parse(form.start))) {
    errors.push("start date is required");
  }
  if (form.end) {
    if (Number.isNaN(Date.parse(form.end))) {
      errors.push("end date is not a valid date");
    } else if (form.start && Date.parse(form.end) < Date.parse(form.start)) {
      errors.push("end date precedes start date");
    }
  }
  return errors;
}

export type SubmitResult =
  | { ok: true }
  | { ok: false; errors: string[]; reauth?: boolean };

/** Validate, POST, and map failures for inline display. Invalid forms never
 * reach the network; the caller keeps the form state on any failure. */
export async function submitMedication(
  api: ApiClient,
  patientId: string,
  form: MedicationFormState,
  formulary: string[] = DEFAULT_FORMULARY,
): Promise<SubmitResult> {
  const errors = validateMedicationForm(form, formulary);
  if (errors.length) return { ok: false, errors };
  const body: MedicationIn = {
    name: form.name,
    start: form.start,
    end: form.end || null,
    dosage_note: form.dosage_note,
  };
  try {
    await api.addMedication(patientId, body);
    return { ok: true };
  } catch (err) {
    if (err instanceof ApiError && err.status === 401) {
      return { ok: false, errors: ["re-authenticate: the API rejected the token"], reauth: true };
    }
    const message = err instanceof Error ? err.message : String(err);
    return { ok: false, errors: [message] };
  }
}

interface MedicationFormOptions {
  formulary?: string[];
  onSubmitted: () => void;
}

/** Render the prescription entry form; on success the caller's refresh hook
 * runs so the new marker appears on the timeline. */
export function renderMedicationForm(
  container: HTMLElement,
  api: ApiClient,
  patientId: string,
  options: MedicationFormOptions,
): HTMLFormElement {
  const formulary = options.formulary ?? DEFAULT_FORMULARY;
  const form = document.createElement("form");
  form.className = "medication-form";

  const select = document.createElement("select");
  select.name = "name";
  const placeholder = document.createElement("option");
  placeholder.value = "";
  placeholder.textContent = "medication";
  select.appendChild(placeholder);
  for (const name of formulary) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    select.appendChild(option);
  }
  form.appendChild(select);

  const start = document.createElement("input");
  start.type = "datetime-local";
  start.name = "start";
  form.appendChild(start);

  const end = document.createElement("input");
  end.type = "datetime-local";
  end.name = "end";
  form.appendChild(end);

  const note = document.createElement("input");
  note.type = "text";
  note.name = "dosage_note";
  note.placeholder = "dosage note";
  form.appendChild(note);

  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "prescribe";
  form.appendChild(submit);

  const errorBox = document.createElement("ul");
  errorBox.className = "form-errors";
  form.appendChild(errorBox);

  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    errorBox.replaceChildren();
    const state: MedicationFormState = {
      name: select.value,
      start: start.value,
      end: end.value,
      dosage_note: note.value,
    };
    const result = await submitMedication(api, patientId, state, formulary);
    if (result.ok) {
      form.reset();
      options.onSubmitted();
      return;
    }
    // failure: surface messages inline, keep what the clinician typed
    for (const message of result.errors) {
      const item = document.createElement("li");
      item.className = result.reauth ? "form-error reauth" : "form-error";
      item.textContent = message;
      errorBox.appendChild(item);
    }
  });

  container.appendChild(form);
  return form;
}
