/** Payload shapes of the pipeline HTTP API. The dashboard is a pure view
 * over these: no severity, forecast or correlation value is computed here. */

export interface SeverityPoint {
  timestamp: string;
  Q: number | null;
  S: number;
  is_forecast: boolean;
  diagnosis_id: string | null;
}

export interface MedicationEvent {
  name: string;
  start: string;
  end: string | null;
  dosage_note: string;
}

export interface MedicationEffect {
  name: string;
  start: string;
  status: "ok" | "insufficient-data";
  slope_before: number | null;
  slope_after: number | null;
  slope_delta: number | null;
  disclaimer: string;
}

export interface TimelinePayload {
  patient_id: string;
  points: SeverityPoint[];
  medications: MedicationEvent[];
  forecast: SeverityPoint[];
  correlations: MedicationEffect[];
  notes: string[];
}

export interface TriageEntry {
  patient_id: string;
  current_s: number | null;
  trend_slope: number | null;
  forecast_s: number | null;
}

export interface TriagePayload {
  queue: TriageEntry[];
}

export interface PatientIn {
  age: number;
  sex: string;
  prior_history?: string[];
  patient_id?: string;
}

export interface MedicationIn {
  name: string;
  start: string;
  end?: string | null;
  dosage_note?: string;
}
