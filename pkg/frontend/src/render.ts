/**
 * DOM rendering for the review queue. Pure functions from state to elements;
 * all mutation flows through the QueueController passed in.
 */

import { ReviewApi } from "./api.js";
import { diffGrids, diffSummary, RowDiff } from "./diff.js";
import { GridParseError, ParsedGrid, parsePrediction, validateEdit } from "./normalize.js";
import { QueueController, QueueState } from "./queue.js";
import { renderSceneTree } from "./sgtree.js";
import { ResponseRecord, ReviewContext } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function safeParse(text: string | null, horizon: number): ParsedGrid | null {
  if (!text) return null;
  try {
    return parsePrediction(text, horizon);
  } catch (err) {
    if (err instanceof GridParseError) return null;
    throw err;
  }
}

function gridTable(doc: Document, diffs: RowDiff[], title: string, ed: number | null): HTMLElement {
  const wrap = el(doc, "div", "grid-block");
  const head = el(doc, "div", "grid-head", title);
  if (ed !== null) {
    const badge = el(doc, "span", "ed-badge", `ED ${ed.toFixed(3)}`);
    head.appendChild(badge);
  }
  wrap.appendChild(head);
  const table = el(doc, "table", "grid-table");
  for (const row of diffs) {
    const tr = el(doc, "tr");
    tr.appendChild(el(doc, "th", undefined, `h${row.hId}`));
    for (const slot of row.slots) {
      const td = el(
        doc,
        "td",
        `slot slot-${slot.mark}`,
        slot.label ? `${slot.label.verb} ${slot.label.noun}` : "-",
      );
      td.title = `gt: ${slot.gt.verb} ${slot.gt.noun}`;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  wrap.appendChild(table);
  const summary = diffSummary(diffs);
  wrap.appendChild(
    el(
      doc,
      "div",
      "grid-summary",
      `full ${summary.full.toFixed(2)} · verb ${summary.verb.toFixed(2)} · noun ${summary.noun.toFixed(2)}`,
    ),
  );
  return wrap;
}

function gtTable(doc: Document, gt: ParsedGrid): HTMLElement {
  const wrap = el(doc, "div", "grid-block gt");
  wrap.appendChild(el(doc, "div", "grid-head", "ground truth"));
  const table = el(doc, "table", "grid-table");
  for (const row of gt.rows) {
    const tr = el(doc, "tr");
    tr.appendChild(el(doc, "th", undefined, `h${row[0].hId}`));
    for (const label of row) {
      tr.appendChild(el(doc, "td", "slot", `${label.verb} ${label.noun}`));
    }
    table.appendChild(tr);
  }
  wrap.appendChild(table);
  return wrap;
}

function responseFor(item: ReviewContext, run: number): ResponseRecord | undefined {
  return item.responses.find((r) => r.run_index === run);
}

export function renderCard(
  doc: Document,
  api: ReviewApi,
  controller: QueueController,
  item: ReviewContext,
  focused: boolean,
  editing: boolean,
): HTMLElement {
  const pair = item.pair;
  const card = el(doc, "article", focused ? "card focused" : "card");
  card.dataset.pairId = pair.pair_id;

  const header = el(doc, "header");
  header.appendChild(el(doc, "strong", undefined, pair.sample_id));
  header.appendChild(
    el(doc, "span", "meta", ` ${item.sample.room} · ${item.sample.num_humans} humans · ${pair.model_id}`),
  );
  card.appendChild(header);

  const strip = el(doc, "div", "frames");
  for (const frame of item.sample.frame_refs) {
    const img = el(doc, "img", "frame");
    img.src = api.mediaUrl(frame.scenario_id, frame.step);
    img.alt = `${frame.scenario_id} step ${frame.step}`;
    img.loading = "lazy";
    strip.appendChild(img);
  }
  card.appendChild(strip);

  card.appendChild(renderSceneTree(doc, item.sample.scene_graph));

  const gt = parsePrediction(item.sample.gt_text, item.sample.horizon);
  const grids = el(doc, "div", "grids");
  grids.appendChild(gtTable(doc, gt));
  const chosen = responseFor(item, pair.chosen_run);
  const rejected = responseFor(item, pair.rejected_run);
  grids.appendChild(
    gridTable(
      doc,
      diffGrids(safeParse(chosen?.parsed_text ?? null, item.sample.horizon), gt),
      `chosen (run ${pair.chosen_run})`,
      pair.chosen_ed,
    ),
  );
  grids.appendChild(
    gridTable(
      doc,
      diffGrids(safeParse(rejected?.parsed_text ?? null, item.sample.horizon), gt),
      `rejected (run ${pair.rejected_run})`,
      pair.rejected_ed,
    ),
  );
  card.appendChild(grids);

  const actions = el(doc, "div", "actions");
  const buttons: [string, string][] = [
    ["approve", "a"],
    ["swap", "s"],
    ["edit", "e"],
    ["reject", "r"],
  ];
  for (const [decision, hotkey] of buttons) {
    const btn = el(doc, "button", `act act-${decision}`, `${decision} (${hotkey})`);
    btn.addEventListener("click", () => {
      if (decision === "edit") controller.openEditor(pair.pair_id);
      else void controller.decide(pair.pair_id, decision as never);
    });
    actions.appendChild(btn);
  }
  card.appendChild(actions);

  if (editing) {
    card.appendChild(renderEditor(doc, controller, item, chosen?.parsed_text ?? ""));
  }
  return card;
}

export function renderEditor(
  doc: Document,
  controller: QueueController,
  item: ReviewContext,
  initial: string,
): HTMLElement {
  const wrap = el(doc, "div", "editor");
  wrap.appendChild(el(doc, "div", "grid-head", "edit chosen response"));
  const area = el(doc, "textarea", "editor-text");
  area.value = initial;
  area.rows = 3;
  const message = el(doc, "div", "editor-message");
  const submit = el(doc, "button", "act act-edit-submit", "submit edit");
  const cancel = el(doc, "button", "act", "cancel");

  const revalidate = () => {
    const verdict = validateEdit(area.value, item.sample.horizon);
    if (verdict.ok) {
      message.textContent = `ok -> ${verdict.canonical}`;
      message.className = "editor-message ok";
      submit.removeAttribute("disabled");
    } else {
      message.textContent = verdict.message;
      message.className = "editor-message bad";
      submit.setAttribute("disabled", "disabled");
    }
  };
  area.addEventListener("input", revalidate);
  revalidate();

  submit.addEventListener("click", () => {
    const verdict = validateEdit(area.value, item.sample.horizon);
    if (!verdict.ok) return; // local validation gate
    void controller.decide(item.pair.pair_id, "edit", verdict.canonical);
  });
  cancel.addEventListener("click", () => controller.closeEditor());

  wrap.appendChild(area);
  wrap.appendChild(message);
  wrap.appendChild(submit);
  wrap.appendChild(cancel);
  return wrap;
}

export function renderApp(
  doc: Document,
  root: HTMLElement,
  api: ReviewApi,
  controller: QueueController,
  state: QueueState,
): void {
  root.textContent = "";

  const bar = el(doc, "div", "statusbar");
  if (state.stats) {
    const s = state.stats.by_status;
    bar.appendChild(
      el(
        doc,
        "span",
        "stats",
        `pending ${s.pending ?? 0} · approved ${s.approved ?? 0} · swapped ${s.swapped ?? 0} · edited ${s.edited ?? 0} · rejected ${s.rejected ?? 0}`,
      ),
    );
  }
  if (state.offline) {
    bar.appendChild(el(doc, "span", "offline", "service unreachable"));
    const retry = el(doc, "button", "act", "retry");
    retry.addEventListener("click", () => void controller.load());
    bar.appendChild(retry);
  }
  if (state.toast) bar.appendChild(el(doc, "span", "toast", state.toast));
  root.appendChild(bar);

  if (!state.offline && state.items.length === 0) {
    root.appendChild(el(doc, "p", "empty", "queue empty - nothing pending"));
    return;
  }
  const list = el(doc, "div", "cards");
  state.items.forEach((item, i) => {
    list.appendChild(
      renderCard(
        doc,
        api,
        controller,
        item,
        i === state.focus,
        state.editing === item.pair.pair_id,
      ),
    );
  });
  root.appendChild(list);
}
