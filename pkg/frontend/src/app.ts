import { ApiClient } from "./api.js";
import { renderMedicationForm } from "./medication.js";
import { buildTimelineView, clearErrorBanner, renderTimeline, showErrorBanner } from "./timeline.js";
import { renderTriageBoard } from "./triage.js";

const DEFAULT_REFRESH_MS = 30_000;

interface Settings {
  baseUrl: string;
  token: string;
  refreshMs: number;
}

function loadSettings(): Settings {
  try {
    const raw = localStorage.getItem("ctpipe-dashboard-settings");
    if (raw) return { refreshMs: DEFAULT_REFRESH_MS, ...JSON.parse(raw) };
  } catch {
    /* fall through to defaults */
  }
  return { baseUrl: "http://127.0.0.1:8000", token: "", refreshMs: DEFAULT_REFRESH_MS };
}

function saveSettings(settings: Settings): void {
  localStorage.setItem("ctpipe-dashboard-settings", JSON.stringify(settings));
}

export class DashboardApp {
  private api: ApiClient;
  private settings: Settings;
  private currentPatient: string | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    settings?: Settings,
  ) {
    this.settings = settings ?? loadSettings();
    this.api = new ApiClient({ baseUrl: this.settings.baseUrl, token: this.settings.token || undefined });
  }

  start(): void {
    this.renderShell();
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.settings.refreshMs);
  }

  stop(): void {
    if (this.timer) clearInterval(this.timer);
    this.timer = null;
  }

  private renderShell(): void {
    this.root.replaceChildren();
    const nav = document.createElement("nav");
    nav.className = "topbar";

    const boardLink = document.createElement("button");
    boardLink.textContent = "triage board";
    boardLink.addEventListener("click", () => {
      this.currentPatient = null;
      void this.refresh();
    });
    nav.appendChild(boardLink);

    const settingsForm = document.createElement("form");
    settingsForm.className = "settings";
    const url = document.createElement("input");
    url.value = this.settings.baseUrl;
    url.placeholder = "API endpoint";
    const token = document.createElement("input");
    token.type = "password";
    token.value = this.settings.token;
    token.placeholder = "bearer token";
    const apply = document.createElement("button");
    apply.type = "submit";
    apply.textContent = "connect";
    settingsForm.append(url, token, apply);
    settingsForm.addEventListener("submit", (event) => {
      event.preventDefault();
      this.settings = { ...this.settings, baseUrl: url.value, token: token.value };
      saveSettings(this.settings);
      this.api = new ApiClient({ baseUrl: this.settings.baseUrl, token: this.settings.token || undefined });
      void this.refresh();
    });
    nav.appendChild(settingsForm);
    this.root.appendChild(nav);

    const main = document.createElement("main");
    main.id = "view";
    this.root.appendChild(main);
  }

  private view(): HTMLElement {
    return this.root.querySelector("#view") as HTMLElement;
  }

  async refresh(): Promise<void> {
    if (this.currentPatient) {
      await this.showPatient(this.currentPatient);
    } else {
      await this.showBoard();
    }
  }

  async showBoard(): Promise<void> {
    const view = this.view();
    try {
      const payload = await this.api.latest("triage", () => this.api.getTriage());
      if (payload === null) return; // a newer request superseded this one
      clearErrorBanner(view);
      renderTriageBoard(view, payload, (patientId) => {
        this.currentPatient = patientId;
        void this.showPatient(patientId);
      });
    } catch (err) {
      // keep the last-good board; surface a retriable banner
      showErrorBanner(view, `triage fetch failed: ${err instanceof Error ? err.message : err}`, () =>
        void this.showBoard(),
      );
    }
  }

  async showPatient(patientId: string): Promise<void> {
    const view = this.view();
    try {
      const payload = await this.api.latest(`timeline:${patientId}`, () =>
        this.api.getTimeline(patientId, { forecast: true, horizon: 3 }),
      );
      if (payload === null) return;
      clearErrorBanner(view);
      renderTimeline(view, buildTimelineView(payload));
      renderMedicationForm(view, this.api, patientId, {
        onSubmitted: () => void this.showPatient(patientId),
      });
    } catch (err) {
      showErrorBanner(view, `timeline fetch failed: ${err instanceof Error ? err.message : err}`, () =>
        void this.showPatient(patientId),
      );
    }
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  new DashboardApp(document.getElementById("app") as HTMLElement).start();
}
