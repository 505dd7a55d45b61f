// Pure DOM builders for result cards.  Everything shown comes straight from
// the API response plus the class-name table; no client-side re-scoring.

import { ChainTrace, ClassEntry, DiagnosisResult } from "./types.js";

export type NameTable = Map<number, string>;

export function nameTable(classes: ClassEntry[]): NameTable {
    return new Map(classes.map((entry) => [entry.code, entry.name]));
}

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

export function renderTopN(doc: Document, result: DiagnosisResult, names: NameTable): HTMLElement {
    const container = el(doc, "div", "topn");
    container.appendChild(el(doc, "h4", undefined, `Image model top-${result.top_n}`));
    const list = el(doc, "ol", "topn-list");
    for (const entry of result.image_topn.top) {
        const item = el(doc, "li", "topn-item");
        const bar = el(doc, "span", "topn-bar");
        bar.style.width = `${Math.round(entry.score * 100)}%`;
        item.appendChild(bar);
        item.appendChild(
            el(doc, "span", "topn-label", `${names.get(entry.code) ?? entry.code} (${entry.score.toFixed(3)})`),
        );
        list.appendChild(item);
    }
    container.appendChild(list);
    return container;
}

export function renderTimeline(doc: Document, trace: ChainTrace, names: NameTable): HTMLElement {
    const container = el(doc, "div", "timeline");
    container.appendChild(el(doc, "h4", undefined, "Elimination timeline"));
    const list = el(doc, "ol", "timeline-steps");
    for (const step of trace.steps) {
        const removedNames = step.removed.map((code) => names.get(code) ?? String(code)).join(", ");
        const item = el(
            doc,
            "li",
            "timeline-step",
            `Step ${step.step}: ${step.remaining_before.length} options, removed ${removedNames}`,
        );
        list.appendChild(item);
    }
    container.appendChild(list);
    const survivors = trace.remaining.map((code) => names.get(code) ?? String(code)).join(", ");
    container.appendChild(el(doc, "p", "timeline-survivors", `Remaining: ${survivors}`));
    return container;
}

/** Side-by-side diff of the remaining-option sets after each elimination step. */
export function renderRemainingDiff(
    doc: Document,
    previous: ChainTrace,
    current: ChainTrace,
    names: NameTable,
): HTMLElement {
    const container = el(doc, "div", "diff");
    container.appendChild(el(doc, "h4", undefined, "Remaining-options diff vs previous run"));
    const table = el(doc, "table", "diff-table");
    const header = el(doc, "tr");
    header.appendChild(el(doc, "th", undefined, "After step"));
    header.appendChild(el(doc, "th", undefined, "Previous run"));
    header.appendChild(el(doc, "th", undefined, "This run"));
    table.appendChild(header);

    const remainingAfter = (trace: ChainTrace, step: number): number[] | undefined => {
        if (step < trace.steps.length) {
            const next = trace.steps[step + 1];
            return next ? next.remaining_before : trace.remaining;
        }
        return step === trace.steps.length ? trace.remaining : undefined;
    };

    const maxSteps = Math.max(previous.steps.length, current.steps.length);
    for (let step = 1; step <= maxSteps; step += 1) {
        const row = el(doc, "tr", "diff-row");
        row.appendChild(el(doc, "td", undefined, String(step)));
        const prevSet = remainingAfter(previous, step - 1) ?? [];
        const currSet = remainingAfter(current, step - 1) ?? [];
        const prevOnly = prevSet.filter((code) => !currSet.includes(code));
        const currOnly = currSet.filter((code) => !prevSet.includes(code));
        const fmt = (codes: number[]) => codes.map((code) => names.get(code) ?? String(code)).join(", ") || "(same)";
        const prevCell = el(doc, "td", prevOnly.length ? "diff-changed" : "diff-same", fmt(prevOnly));
        const currCell = el(doc, "td", currOnly.length ? "diff-changed" : "diff-same", fmt(currOnly));
        row.appendChild(prevCell);
        row.appendChild(currCell);
        table.appendChild(row);
    }
    container.appendChild(table);
    return container;
}

export function renderResultCard(
    doc: Document,
    result: DiagnosisResult,
    names: NameTable,
    runIndex: number,
    previous?: DiagnosisResult,
): HTMLElement {
    const card = el(doc, "section", "result-card");
    card.appendChild(
        el(doc, "h3", "final-class", `Run ${runIndex}: ${result.final_class.name} (code ${result.final_class.code})`),
    );
    card.appendChild(
        el(
            doc,
            "p",
            "result-meta",
            `mode ${result.mode}, top-${result.top_n}, ${result.timings_ms.total.toFixed(1)} ms`,
        ),
    );
    card.appendChild(renderTopN(doc, result, names));
    card.appendChild(renderTimeline(doc, result.chain_trace, names));
    if (previous) {
        card.appendChild(renderRemainingDiff(doc, previous.chain_trace, result.chain_trace, names));
    }
    return card;
}
