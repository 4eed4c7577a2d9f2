/**
 * DOM glue for the console. All state lives in the controllers (and on the
 * server); this file only renders and forwards events.
 */

import { ApiClient, ApiError, MetaView } from "./api.js";
import { AuditFormatError, agreementMatrix, formatF1, isEmptyReport, parseAuditReport } from "./audit.js";
import { LabelingController, LabelingState } from "./labeling.js";
import { RedTeamController, RedTeamState } from "./redteam.js";
import { CATEGORIES, Ternary, cycle } from "./taxonomy.js";

type TabName = "label" | "redteam" | "audit";

const TERNARY_GLYPH: Record<Ternary, string> = {
  positive: "+",
  negative: "-",
  unlabeled: "·",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") {
      node.className = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  node.append(...children);
  return node;
}

function scoreBar(score: number): HTMLElement {
  const bar = el("div", { class: "bar" });
  const fill = el("div", { class: "bar-fill" });
  fill.style.width = `${Math.round(score * 100)}%`;
  bar.appendChild(fill);
  return bar;
}

class Console {
  private api: ApiClient | null = null;
  private meta: MetaView | null = null;
  private labeling: LabelingController | null = null;
  private redteam: RedTeamController | null = null;
  private annotator = "console";

  constructor(private root: HTMLElement) {
    this.renderConnect();
  }

  private renderConnect(error?: string) {
    this.root.replaceChildren();
    const url = el("input", { id: "base-url", value: "http://127.0.0.1:8700", size: "40" });
    const token = el("input", { id: "token", placeholder: "bearer token (optional)", size: "28" });
    const name = el("input", { id: "annotator", value: this.annotator, size: "16" });
    const button = el("button", {}, "Connect");
    button.addEventListener("click", () => {
      this.annotator = name.value.trim() || "console";
      void this.connect(url.value.trim(), token.value.trim() || null);
    });
    const form = el(
      "div",
      { class: "connect" },
      el("h1", {}, "moderation console"),
      el("label", {}, "service ", url),
      el("label", {}, "token ", token),
      el("label", {}, "annotator ", name),
      button,
    );
    if (error) {
      form.appendChild(el("p", { class: "banner" }, error));
    }
    this.root.appendChild(form);
  }

  private async connect(baseUrl: string, token: string | null) {
    const api = new ApiClient(baseUrl, token);
    try {
      this.meta = await api.meta();
    } catch (err) {
      this.renderConnect(err instanceof Error ? err.message : String(err));
      return;
    }
    this.api = api;
    this.labeling = new LabelingController(api, (state) => this.renderLabeling(state));
    this.redteam = new RedTeamController(api, this.meta.thresholds, (state) => this.renderRedTeam(state));
    this.renderShell();
    void this.labeling.refresh();
  }

  private renderShell() {
    this.root.replaceChildren();
    const tabs = el("nav", {});
    for (const [name, title] of [
      ["label", "Label"],
      ["redteam", "Red team"],
      ["audit", "Audit"],
    ] as [TabName, string][]) {
      const button = el("button", { "data-tab": name }, title);
      button.addEventListener("click", () => this.showTab(name));
      tabs.appendChild(button);
    }
    const checkpoint = this.meta ? this.meta.checkpoint_id.slice(0, 12) : "?";
    this.root.append(
      el("header", {}, el("h1", {}, "moderation console"), el("span", { class: "meta" }, `checkpoint ${checkpoint}`), tabs),
      el("main", { id: "panel-label" }),
      el("main", { id: "panel-redteam", class: "hidden" }),
      el("main", { id: "panel-audit", class: "hidden" }),
    );
    this.buildRedTeamPanel();
    this.showTab("label");
  }

  private showTab(tab: TabName) {
    for (const name of ["label", "redteam", "audit"] as TabName[]) {
      const panel = document.getElementById(`panel-${name}`);
      if (panel) {
        panel.classList.toggle("hidden", name !== tab);
      }
    }
    for (const button of this.root.querySelectorAll("nav button")) {
      button.classList.toggle("active", button.getAttribute("data-tab") === tab);
    }
    if (tab === "audit") {
      void this.renderAudit();
    }
  }

  // ----- labeling -----------------------------------------------------

  private renderLabeling(state: LabelingState) {
    const panel = document.getElementById("panel-label");
    if (!panel || !this.labeling) {
      return;
    }
    panel.replaceChildren();
    if (state.banner) {
      const retry = el("button", {}, "retry");
      retry.addEventListener("click", () => void this.labeling?.refresh());
      panel.appendChild(el("p", { class: "banner" }, state.banner, " ", retry));
    }
    if (state.stats) {
      panel.appendChild(
        el(
          "p",
          { class: "meta" },
          `queue: ${state.stats.pending} pending, ${state.stats.leased} leased, ${state.stats.completed} completed`,
        ),
      );
    }
    if (state.phase === "idle") {
      panel.appendChild(el("p", { class: "empty" }, "queue is empty; nothing to label"));
      const again = el("button", {}, "check again");
      again.addEventListener("click", () => void this.labeling?.refresh());
      panel.appendChild(again);
      return;
    }
    if (state.phase === "loading" || state.phase === "start" || state.phase === "submitting") {
      panel.appendChild(el("p", { class: "empty" }, state.phase === "submitting" ? "submitting..." : "loading..."));
      return;
    }
    const item = state.item;
    if (!item) {
      return;
    }
    panel.append(
      el("p", { class: "meta" }, `sample ${item.id}, lease ${Math.round(item.lease_expires_in)}s`),
      el("blockquote", {}, item.text),
    );
    const table = el("table", { class: "categories" });
    for (const cat of CATEGORIES) {
      const value = state.assignments[cat];
      const control = el("button", { class: `ternary ${value}` }, TERNARY_GLYPH[value]);
      control.addEventListener("click", () => this.labeling?.setLabel(cat, cycle(value)));
      const score = item.scores[cat] ?? 0;
      table.appendChild(
        el(
          "tr",
          {},
          el("td", { class: "cat" }, cat),
          el("td", {}, control),
          el("td", { class: "value" }, value),
          el("td", { class: "score" }, score.toFixed(3)),
          el("td", { class: "barcell" }, scoreBar(score)),
        ),
      );
    }
    panel.appendChild(table);
    const submit = el("button", { class: "primary" }, "submit and next");
    submit.disabled = !this.labeling.canSubmit();
    submit.addEventListener("click", () => void this.labeling?.submit(this.annotator));
    const skip = el("button", {}, "skip for now");
    skip.addEventListener("click", () => void this.labeling?.refresh());
    panel.append(el("div", { class: "actions" }, submit, " ", skip));
  }

  // ----- red team ------------------------------------------------------

  private buildRedTeamPanel() {
    const panel = document.getElementById("panel-redteam");
    if (!panel || !this.redteam) {
      return;
    }
    panel.replaceChildren();
    const text = el("textarea", { id: "rt-text", rows: "5", placeholder: "draft a probe; scores update as you pause" });
    text.addEventListener("input", () => this.redteam?.onInput(text.value));
    const note = el("input", { id: "rt-note", placeholder: "note (optional)", size: "40" });
    const submit = el("button", { class: "primary", id: "rt-submit" }, "record case");
    submit.addEventListener("click", () => void this.redteam?.submit(note.value));
    panel.append(
      el("p", { class: "meta" }, "live scores are debounced; mark the labels you expect, then record the case"),
      text,
      el("div", { id: "rt-scores" }),
      el("div", { class: "actions" }, note, " ", submit),
      el("div", { id: "rt-status" }),
    );
    this.renderRedTeam(this.redteam.state);
  }

  private renderRedTeam(state: RedTeamState) {
    const scores = document.getElementById("rt-scores");
    const status = document.getElementById("rt-status");
    const submit = document.getElementById("rt-submit") as HTMLButtonElement | null;
    if (!scores || !status || !this.redteam) {
      return;
    }
    scores.replaceChildren();
    const verdicts = this.redteam.verdicts();
    const table = el("table", { class: "categories" });
    for (const cat of CATEGORIES) {
      const expected = state.expected[cat];
      const control = el("button", { class: `ternary ${expected}` }, TERNARY_GLYPH[expected]);
      control.addEventListener("click", () => this.redteam?.setExpected(cat, cycle(expected)));
      const score = state.scores ? (state.scores[cat] ?? 0) : null;
      const verdict = verdicts[cat];
      table.appendChild(
        el(
          "tr",
          {},
          el("td", { class: "cat" }, cat),
          el("td", {}, control),
          el("td", { class: "value" }, expected),
          el("td", { class: "score" }, score === null ? "—" : score.toFixed(3)),
          el("td", { class: "barcell" }, score === null ? "" : scoreBar(score)),
          el("td", { class: `verdict ${verdict}` }, verdict === "none" ? "" : verdict),
        ),
      );
    }
    scores.appendChild(table);
    if (state.scoring) {
      scores.appendChild(el("p", { class: "meta" }, "scoring..."));
    }
    status.replaceChildren();
    if (state.banner) {
      status.appendChild(el("p", { class: "banner" }, state.banner));
    }
    if (state.submitState === "submitted" && state.receipt) {
      status.appendChild(
        el(
          "p",
          { class: "ok" },
          `recorded ${state.receipt.id}${state.receipt.duplicate ? " (duplicate of an existing case)" : ""}`,
        ),
      );
    }
    if (submit) {
      submit.disabled = !this.redteam.canSubmit();
    }
  }

  // ----- audit ----------------------------------------------------------

  private async renderAudit() {
    const panel = document.getElementById("panel-audit");
    if (!panel || !this.api) {
      return;
    }
    panel.replaceChildren(el("p", { class: "empty" }, "loading audit report..."));
    let raw: unknown;
    try {
      raw = await this.api.auditReport();
    } catch (err) {
      const message =
        err instanceof ApiError && err.status === 404 ? "no audit report on the server yet" : `could not load report: ${err}`;
      panel.replaceChildren(el("p", { class: "banner" }, message));
      return;
    }
    let view;
    try {
      view = parseAuditReport(raw);
    } catch (err) {
      const message = err instanceof AuditFormatError ? err.message : String(err);
      panel.replaceChildren(el("p", { class: "banner" }, `malformed audit report: ${message}`));
      return;
    }
    panel.replaceChildren();
    if (isEmptyReport(view)) {
      panel.appendChild(el("p", { class: "empty" }, "audit report is empty"));
      return;
    }
    const summary = el("table", { class: "categories" });
    summary.appendChild(
      el(
        "tr",
        {},
        el("th", {}, "category"),
        el("th", {}, "tp"),
        el("th", {}, "fp"),
        el("th", {}, "fn"),
        el("th", {}, "tn"),
        el("th", {}, "f1"),
        el("th", {}, "disagreements"),
      ),
    );
    for (const cat of CATEGORIES) {
      const entry = view.categories[cat];
      if (!entry) {
        continue;
      }
      const ids = view.disagreements[cat] ?? [];
      const row = el(
        "tr",
        { class: entry.flagged ? "flagged" : "" },
        el("td", { class: "cat" }, cat),
        el("td", {}, String(entry.tp)),
        el("td", {}, String(entry.fp)),
        el("td", {}, String(entry.fn)),
        el("td", {}, String(entry.tn)),
        el("td", { class: "score" }, formatF1(entry.f1)),
        el("td", { class: "ids" }, ids.join(", ")),
      );
      summary.appendChild(row);
    }
    panel.append(el("h2", {}, "annotator vs auditor"), summary);
    const matrix = el("table", { class: "matrix" });
    matrix.appendChild(
      el("tr", {}, el("th", {}, "sample"), ...CATEGORIES.map((cat) => el("th", {}, cat))),
    );
    for (const row of agreementMatrix(view)) {
      matrix.appendChild(
        el(
          "tr",
          {},
          el("td", { class: "ids" }, row.sampleId),
          ...CATEGORIES.map((cat) =>
            el("td", { class: row.cells[cat] ? "agree" : "disagree" }, row.cells[cat] ? "·" : "×"),
          ),
        ),
      );
    }
    panel.append(el("h2", {}, "per-sample agreement"), matrix);
  }
}

const root = document.getElementById("app");
if (root) {
  new Console(root);
}

export { Console };
