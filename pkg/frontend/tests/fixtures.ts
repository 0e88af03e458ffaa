/** Recorded API payloads, captured verbatim from a live pipeline service
 * (patients driven through POST /patients, scan ingests and
 * POST /medications, then GET /timeline and GET /triage). */

import type { TimelinePayload, TriagePayload } from "../src/types.js";

/** Six observed points, one medication band, an "ok" slope-delta badge and
 * a 3-day forecast. */
export const TIMELINE_DECLINING: TimelinePayload = {
  patient_id: "pt-a",
  points: [
    { timestamp: "2020-04-01T09:00:00", Q: 10.0, S: 100.0, is_forecast: false, diagnosis_id: "038c4f7e2d6e4b07b6ad1b46d191fbdc" },
    { timestamp: "2020-04-02T09:00:00", Q: 9.5, S: 95.0, is_forecast: false, diagnosis_id: "9a73b73de3564946ad2e71dcf27384c9" },
    { timestamp: "2020-04-03T09:00:00", Q: 9.0, S: 90.0, is_forecast: false, diagnosis_id: "a0d9a4130dab43cfb4177d8375250991" },
    { timestamp: "2020-04-04T09:00:00", Q: 7.5, S: 75.0, is_forecast: false, diagnosis_id: "e349c6353c624b7d92b62c403b183e27" },
    { timestamp: "2020-04-05T09:00:00", Q: 6.0, S: 60.0, is_forecast: false, diagnosis_id: "78c40ae4e1ff421b9403ef3e7fd67efd" },
    { timestamp: "2020-04-06T09:00:00", Q: 4.5, S: 45.0, is_forecast: false, diagnosis_id: "70841288d94e40fe9e4b00ba2ed07921" },
  ],
  medications: [
    { name: "dexamethasone", start: "2020-04-04T09:00:00", end: "2020-04-07T09:00:00", dosage_note: "" },
  ],
  forecast: [
    { timestamp: "2020-04-07T09:00:00", Q: null, S: 30.0, is_forecast: true, diagnosis_id: null },
    { timestamp: "2020-04-08T09:00:00", Q: null, S: 15.0, is_forecast: true, diagnosis_id: null },
    { timestamp: "2020-04-09T09:00:00", Q: null, S: 0.0, is_forecast: true, diagnosis_id: null },
  ],
  correlations: [
    {
      name: "dexamethasone",
      start: "2020-04-04T09:00:00",
      status: "ok",
      slope_before: -5.0,
      slope_after: -15.0,
      slope_delta: -10.0,
      disclaimer: "association, not causation",
    },
  ],
  notes: [],
};

/** Worsening patient whose latest S is 130 (above baseline). */
export const TIMELINE_WORSENING: TimelinePayload = {
  patient_id: "pt-b",
  points: [
    { timestamp: "2020-04-01T09:00:00", Q: 10.0, S: 100.0, is_forecast: false, diagnosis_id: "0a661da9486649beaa92fa8893087961" },
    { timestamp: "2020-04-02T09:00:00", Q: 12.0, S: 120.0, is_forecast: false, diagnosis_id: "ce20fddd4d05499783f142c8f11446b4" },
    { timestamp: "2020-04-03T09:00:00", Q: 13.0, S: 130.0, is_forecast: false, diagnosis_id: "83623fb99385429f8977e89c13e332a0" },
  ],
  medications: [],
  forecast: [
    { timestamp: "2020-04-04T09:00:00", Q: null, S: 146.66666666666669, is_forecast: true, diagnosis_id: null },
    { timestamp: "2020-04-05T09:00:00", Q: null, S: 161.66666666666669, is_forecast: true, diagnosis_id: null },
  ],
  correlations: [],
  notes: [],
};

/** One observed point; the service omits the forecast and says why. */
export const TIMELINE_SINGLE_POINT: TimelinePayload = {
  patient_id: "pt-c",
  points: [
    { timestamp: "2020-04-01T09:00:00", Q: 10.0, S: 100.0, is_forecast: false, diagnosis_id: "69d8cc24f9064914bee68d2f72c875b0" },
  ],
  medications: [],
  forecast: [],
  correlations: [],
  notes: ["insufficient-data: forecast needs >= 2 points"],
};

export const TIMELINE_EMPTY: TimelinePayload = {
  patient_id: "pt-new",
  points: [],
  medications: [],
  forecast: [],
  correlations: [],
  notes: [],
};

export const TRIAGE: TriagePayload = {
  queue: [
    { patient_id: "pt-b", current_s: 130.0, trend_slope: 15.0, forecast_s: 176.66666666666669 },
    { patient_id: "pt-c", current_s: 100.0, trend_slope: 0.0, forecast_s: 100.0 },
    { patient_id: "pt-a", current_s: 60.0, trend_slope: -20.0, forecast_s: 3.3333333333333286 },
  ],
};
