import { isAlert, severityBand } from "./banding.js";
import type { TriagePayload } from "./types.js";

function fmt(value: number | null): string {
  if (value === null) return "-";
  return Number.isInteger(value) ? String(value) : value.toFixed(1);
}

function trendArrow(slope: number | null): string {
  if (slope === null) return "";
  if (slope > 0) return "↑";
  if (slope < 0) return "↓";
  return "→";
}

/** Render the triage queue exactly in payload order (the server owns the
 * ranking); rows link through to the patient timeline. */
export function renderTriageBoard(
  container: HTMLElement,
  payload: TriagePayload,
  onSelect: (patientId: string) => void,
): void {
  container.replaceChildren();
  container.classList.add("triage-board");

  if (!payload.queue.length) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "no patients on the board";
    container.appendChild(empty);
    return;
  }

  const table = document.createElement("table");
  const head = document.createElement("thead");
  head.innerHTML = "<tr><th>patient</th><th>current S</th><th>trend</th><th>forecast S</th></tr>";
  table.appendChild(head);
  const body = document.createElement("tbody");
  for (const entry of payload.queue) {
    const row = document.createElement("tr");
    row.className = "triage-row";
    row.dataset.patientId = entry.patient_id;
    if (entry.current_s !== null && isAlert(entry.current_s)) row.classList.add("alert");
    if (entry.current_s !== null) row.classList.add(`band-${severityBand(entry.current_s)}`);

    const id = document.createElement("td");
    id.textContent = entry.patient_id;
    row.appendChild(id);

    const current = document.createElement("td");
    current.className = "current-s-cell";
    current.dataset.s = entry.current_s === null ? "" : String(entry.current_s);
    current.textContent = fmt(entry.current_s);
    row.appendChild(current);

    const trend = document.createElement("td");
    trend.className = "trend-cell";
    trend.textContent = trendArrow(entry.trend_slope);
    trend.title = entry.trend_slope === null ? "no trend yet" : `${entry.trend_slope}/day`;
    row.appendChild(trend);

    const forecast = document.createElement("td");
    forecast.className = "forecast-s-cell";
    forecast.dataset.s = entry.forecast_s === null ? "" : String(entry.forecast_s);
    forecast.textContent = fmt(entry.forecast_s);
    row.appendChild(forecast);

    row.addEventListener("click", () => onSelect(entry.patient_id));
    body.appendChild(row);
  }
  table.appendChild(body);
  container.appendChild(table);
}
