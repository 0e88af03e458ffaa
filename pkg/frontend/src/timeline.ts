import { BANDING_NOTE, isAlert, severityBand, type SeverityBand } from "./banding.js";
import type { MedicationEffect, MedicationEvent, SeverityPoint, TimelinePayload } from "./types.js";

/** View model for one patient's progression chart. Every number is taken
 * verbatim from the API payload; layout math only decides pixel positions. */
export interface TimelineView {
  patientId: string;
  observed: SeverityPoint[];
  forecast: SeverityPoint[];
  medications: MedicationEvent[];
  badges: MedicationEffect[];
  currentS: number | null;
  band: SeverityBand | null;
  notes: string[];
}

export function buildTimelineView(payload: TimelinePayload): TimelineView {
  const observed = payload.points.filter((p) => !p.is_forecast);
  const forecast = payload.forecast.filter((p) => p.is_forecast);
  const currentS = observed.length ? observed[observed.length - 1].S : null;
  return {
    patientId: payload.patient_id,
    observed,
    forecast,
    medications: payload.medications,
    badges: payload.correlations,
    currentS,
    band: currentS === null ? null : severityBand(currentS),
    notes: payload.notes,
  };
}

const WIDTH = 720;
const HEIGHT = 280;
const MARGIN = { top: 16, right: 24, bottom: 28, left: 44 };
const SVG_NS = "http://www.w3.org/2000/svg";

interface Scale {
  x(t: number): number;
  y(s: number): number;
}

function makeScale(view: TimelineView): Scale {
  const all = [...view.observed, ...view.forecast];
  const times = all.map((p) => Date.parse(p.timestamp));
  for (const med of view.medications) {
    times.push(Date.parse(med.start));
    if (med.end) times.push(Date.parse(med.end));
  }
  const sValues = all.map((p) => p.S).concat([0, 100]);
  const t0 = Math.min(...times);
  const t1 = Math.max(...times);
  const s1 = Math.max(...sValues);
  const innerW = WIDTH - MARGIN.left - MARGIN.right;
  const innerH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const tSpan = t1 - t0 || 1;
  const sSpan = s1 * 1.05 || 1;
  return {
    x: (t) => MARGIN.left + ((t - t0) / tSpan) * innerW,
    y: (s) => MARGIN.top + innerH - (s / sSpan) * innerH,
  };
}

function svgEl<K extends keyof SVGElementTagNameMap>(tag: K, attrs: Record<string, string>): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) el.setAttribute(key, value);
  return el;
}

function fmt(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(1);
}

function polyline(points: SeverityPoint[], scale: Scale, cls: string): SVGPolylineElement {
  const coords = points.map((p) => `${scale.x(Date.parse(p.timestamp))},${scale.y(p.S)}`).join(" ");
  return svgEl("polyline", { points: coords, class: cls, fill: "none" });
}

/** Render the progression chart, medication overlay and correlation badges.
 * Observed and forecast points use distinct classes and shapes; exact payload
 * values ride along in data-s attributes so nothing is recomputed. */
export function renderTimeline(container: HTMLElement, view: TimelineView): void {
  container.replaceChildren();
  container.classList.add("timeline-view");

  const header = document.createElement("div");
  header.className = "timeline-header";
  const title = document.createElement("h2");
  title.textContent = `Patient ${view.patientId}`;
  header.appendChild(title);
  if (view.currentS !== null && view.band !== null) {
    const badge = document.createElement("span");
    badge.className = `current-s band-${view.band}${isAlert(view.currentS) ? " alert" : ""}`;
    badge.dataset.s = String(view.currentS);
    badge.textContent = `S ${fmt(view.currentS)} (${view.band})`;
    badge.title = `S = ${view.currentS}; banding is a ${BANDING_NOTE}`;
    header.appendChild(badge);
  }
  container.appendChild(header);

  if (!view.observed.length && !view.forecast.length) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "no severity data yet";
    container.appendChild(empty);
    renderBadges(container, view.badges);
    renderNotes(container, view.notes);
    return;
  }

  const scale = makeScale(view);
  const svg = svgEl("svg", {
    class: "timeline-chart",
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    width: String(WIDTH),
    height: String(HEIGHT),
  });

  for (const med of view.medications) {
    const x0 = scale.x(Date.parse(med.start));
    const x1 = med.end ? scale.x(Date.parse(med.end)) : WIDTH - MARGIN.right;
    const band = svgEl("rect", {
      class: "med-band",
      x: String(Math.min(x0, x1)),
      y: String(MARGIN.top),
      width: String(Math.max(2, Math.abs(x1 - x0))),
      height: String(HEIGHT - MARGIN.top - MARGIN.bottom),
    });
    band.appendChild(svgEl("title", {})).textContent = `${med.name} ${med.start}${med.end ? ` to ${med.end}` : ""}`;
    svg.appendChild(band);
  }

  // reference line at the baseline level (S = 100)
  svg.appendChild(
    svgEl("line", {
      class: "baseline-100",
      x1: String(MARGIN.left),
      x2: String(WIDTH - MARGIN.right),
      y1: String(scale.y(100)),
      y2: String(scale.y(100)),
    }),
  );

  if (view.observed.length > 1) svg.appendChild(polyline(view.observed, scale, "series observed-line"));
  if (view.forecast.length) {
    const bridge = view.observed.length
      ? [view.observed[view.observed.length - 1], ...view.forecast]
      : view.forecast;
    if (bridge.length > 1) svg.appendChild(polyline(bridge, scale, "series forecast-line"));
  }

  for (const p of view.observed) {
    const cls = `point observed${isAlert(p.S) ? " alert" : ""}`;
    const dot = svgEl("circle", {
      class: cls,
      cx: String(scale.x(Date.parse(p.timestamp))),
      cy: String(scale.y(p.S)),
      r: "4",
    });
    dot.dataset.s = String(p.S);
    dot.dataset.q = p.Q === null ? "" : String(p.Q);
    dot.appendChild(svgEl("title", {})).textContent = `S = ${p.S}, Q = ${p.Q} at ${p.timestamp}`;
    svg.appendChild(dot);
  }
  for (const p of view.forecast) {
    const x = scale.x(Date.parse(p.timestamp));
    const y = scale.y(p.S);
    const cls = `point forecast${isAlert(p.S) ? " alert" : ""}`;
    const diamond = svgEl("polygon", {
      class: cls,
      points: `${x},${y - 5} ${x + 5},${y} ${x},${y + 5} ${x - 5},${y}`,
    });
    diamond.dataset.s = String(p.S);
    diamond.appendChild(svgEl("title", {})).textContent = `forecast S = ${p.S} at ${p.timestamp}`;
    svg.appendChild(diamond);
  }
  container.appendChild(svg);

  renderBadges(container, view.badges);
  renderNotes(container, view.notes);
}

function renderBadges(container: HTMLElement, badges: MedicationEffect[]): void {
  if (!badges.length) return;
  const list = document.createElement("ul");
  list.className = "medication-badges";
  for (const effect of badges) {
    const item = document.createElement("li");
    item.className = `med-badge ${effect.status === "ok" ? "ok" : "insufficient"}`;
    const label = document.createElement("span");
    label.className = "med-name";
    label.textContent = effect.name;
    item.appendChild(label);
    const delta = document.createElement("span");
    delta.className = "slope-delta";
    if (effect.status === "ok" && effect.slope_delta !== null) {
      delta.dataset.delta = String(effect.slope_delta);
      delta.textContent = `slope ${fmt(effect.slope_before ?? 0)} to ${fmt(effect.slope_after ?? 0)} (delta ${fmt(effect.slope_delta)}/day)`;
    } else {
      delta.textContent = "insufficient-data";
    }
    item.appendChild(delta);
    const disclaimer = document.createElement("span");
    disclaimer.className = "disclaimer";
    disclaimer.textContent = effect.disclaimer;
    item.appendChild(disclaimer);
    list.appendChild(item);
  }
  container.appendChild(list);
}

function renderNotes(container: HTMLElement, notes: string[]): void {
  for (const note of notes) {
    const p = document.createElement("p");
    p.className = "timeline-note";
    p.textContent = note;
    container.appendChild(p);
  }
}

/** Show a retriable error banner without touching the rendered payload. */
export function showErrorBanner(container: HTMLElement, message: string, onRetry: () => void): void {
  clearErrorBanner(container);
  const banner = document.createElement("div");
  banner.className = "error-banner";
  const text = document.createElement("span");
  text.textContent = message;
  banner.appendChild(text);
  const retry = document.createElement("button");
  retry.textContent = "retry";
  retry.addEventListener("click", () => {
    clearErrorBanner(container);
    onRetry();
  });
  banner.appendChild(retry);
  container.prepend(banner);
}

export function clearErrorBanner(container: HTMLElement): void {
  for (const el of [...container.children]) {
    if (el.classList.contains("error-banner")) el.remove();
  }
}
