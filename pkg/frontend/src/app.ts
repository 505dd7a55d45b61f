import { NameTable, nameTable, renderResultCard } from "./render.js";
import {
    ApiError,
    ClassEntry,
    ClassesResponse,
    DiagnoseControls,
    DiagnosisResult,
    HealthResponse,
} from "./types.js";

/** What the console needs from the service client (ApiClient satisfies it). */
export interface Api {
    health(): Promise<HealthResponse>;
    classes(): Promise<ClassesResponse>;
    diagnose(image: Blob, narrative: string, controls: DiagnoseControls): Promise<DiagnosisResult>;
}

export interface SessionRun {
    narrative: string;
    result: DiagnosisResult;
}

interface Elements {
    health: HTMLElement;
    chips: HTMLElement;
    imageInput: HTMLInputElement;
    thumbnail: HTMLImageElement;
    narrative: HTMLTextAreaElement;
    topN: HTMLInputElement;
    k: HTMLInputElement;
    mode: HTMLSelectElement;
    submit: HTMLButtonElement;
    hint: HTMLElement;
    error: HTMLElement;
    history: HTMLElement;
}

function grab(doc: Document, id: string): HTMLElement {
    const node = doc.getElementById(id);
    if (!node) throw new Error(`missing #${id} in the page`);
    return node;
}

export class DiagnosisConsole {
    readonly history: SessionRun[] = [];
    private names: NameTable = new Map();
    private classCount = 0;
    private readonly els: Elements;
    private inFlight = false;

    constructor(
        private readonly doc: Document,
        private readonly api: Api,
    ) {
        this.els = {
            health: grab(doc, "health"),
            chips: grab(doc, "class-chips"),
            imageInput: grab(doc, "image-input") as HTMLInputElement,
            thumbnail: grab(doc, "thumbnail") as HTMLImageElement,
            narrative: grab(doc, "narrative") as HTMLTextAreaElement,
            topN: grab(doc, "top-n") as HTMLInputElement,
            k: grab(doc, "chain-k") as HTMLInputElement,
            mode: grab(doc, "mode") as HTMLSelectElement,
            submit: grab(doc, "submit") as HTMLButtonElement,
            hint: grab(doc, "submit-hint"),
            error: grab(doc, "error"),
            history: grab(doc, "history"),
        };
        this.els.narrative.addEventListener("input", () => this.refreshSubmitState());
        this.els.imageInput.addEventListener("change", () => this.onImageChange());
        this.els.mode.addEventListener("change", () => this.refreshControlBounds());
        this.els.submit.addEventListener("click", (event) => {
            event.preventDefault();
            void this.submit();
        });
    }

    async init(): Promise<void> {
        try {
            const health = await this.api.health();
            this.els.health.textContent =
                `service ${health.status}: registry ${health.registry_version}, ` +
                `vision ${health.vision_model}, text ${health.text_model}`;
            const classes = await this.api.classes();
            this.installClasses(classes.classes);
        } catch (error) {
            this.showError(error);
        }
        this.refreshSubmitState();
    }

    private installClasses(classes: ClassEntry[]): void {
        this.names = nameTable(classes);
        this.classCount = classes.length;
        this.els.chips.replaceChildren();
        for (const entry of classes) {
            const chip = this.doc.createElement("button");
            chip.type = "button";
            chip.className = "chip";
            chip.textContent = entry.name;
            chip.title = `code ${entry.code}; click to add to the narrative`;
            chip.addEventListener("click", () => {
                const current = this.els.narrative.value;
                this.els.narrative.value = current ? `${current} ${entry.name}` : entry.name;
                this.refreshSubmitState();
            });
            this.els.chips.appendChild(chip);
        }
        this.refreshControlBounds();
    }

    private refreshControlBounds(): void {
        if (this.classCount > 0) {
            this.els.topN.max = String(this.classCount);
            this.els.k.max = String(this.classCount - 1);
        }
        this.els.k.disabled = this.els.mode.value !== "chain";
    }

    hasImage(): boolean {
        return (this.els.imageInput.files?.length ?? 0) > 0;
    }

    private onImageChange(): void {
        const file = this.els.imageInput.files?.[0];
        if (file && typeof URL !== "undefined" && "createObjectURL" in URL) {
            try {
                this.els.thumbnail.src = URL.createObjectURL(file);
                this.els.thumbnail.hidden = false;
            } catch {
                this.els.thumbnail.hidden = true;
            }
        }
        this.refreshSubmitState();
    }

    refreshSubmitState(): void {
        const narrativeOk = this.els.narrative.value.trim().length > 0;
        const ready = narrativeOk && this.hasImage() && !this.inFlight;
        this.els.submit.disabled = !ready;
        if (!narrativeOk) {
            this.els.hint.textContent = "Describe the symptoms to enable diagnosis.";
        } else if (!this.hasImage()) {
            this.els.hint.textContent = "Choose a skin image to enable diagnosis.";
        } else {
            this.els.hint.textContent = "";
        }
    }

    async submit(): Promise<void> {
        const file = this.els.imageInput.files?.[0];
        const narrative = this.els.narrative.value;
        if (!file || !narrative.trim() || this.inFlight) {
            this.refreshSubmitState();
            return;
        }
        this.inFlight = true;
        this.refreshSubmitState();
        try {
            const { topN, k, mode } = {
                topN: Number(this.els.topN.value) || 5,
                k: Number(this.els.k.value) || 5,
                mode: this.els.mode.value === "direct" ? ("direct" as const) : ("chain" as const),
            };
            const result = await this.api.diagnose(file, narrative, { topN, k, mode });
            this.clearError();
            this.appendRun({ narrative, result });
        } catch (error) {
            this.showError(error);
        } finally {
            this.inFlight = false;
            this.refreshSubmitState();
        }
    }

    private appendRun(run: SessionRun): void {
        const previous = this.history[this.history.length - 1];
        this.history.push(run);
        const card = renderResultCard(this.doc, run.result, this.names, this.history.length, previous?.result);
        this.els.history.appendChild(card);
    }

    private showError(error: unknown): void {
        if (error instanceof ApiError) {
            this.els.error.textContent = `${error.code}: ${error.message}`;
        } else {
            this.els.error.textContent = `request failed: ${String(error)}`;
        }
        this.els.error.hidden = false;
    }

    private clearError(): void {
        this.els.error.textContent = "";
        this.els.error.hidden = true;
    }
}
