// Mirror of the dermdx /v1 HTTP contract (see docs/api.md in the repo root).

export interface HealthResponse {
    status: string;
    registry_version: string;
    vision_model: string;
    text_model: string;
}

export interface ClassEntry {
    code: number;
    name: string;
}

export interface ClassesResponse {
    registry_version: string;
    classes: ClassEntry[];
}

export interface ScoredClass {
    code: number;
    score: number;
    name?: string;
}

export interface PredictionSet {
    sample_id: string;
    top: ScoredClass[];
}

export interface ChainStep {
    step: number;
    remaining_before: number[];
    scores: ScoredClass[];
    removed: number[];
}

export interface ChainTrace {
    remaining: number[];
    step: number;
    eliminated: { step: number; removed: number[] }[];
    steps: ChainStep[];
    final_scores: ScoredClass[];
}

export interface DiagnosisResult {
    final_class: { code: number; name: string };
    mode: "chain" | "direct";
    top_n: number;
    registry_version: string;
    image_topn: PredictionSet;
    chain_trace: ChainTrace;
    timings_ms: { vision: number; text: number; total: number };
}

export interface ApiErrorBody {
    error: { code: string; message: string };
}

export interface DiagnoseControls {
    topN: number;
    k: number;
    mode: "chain" | "direct";
}

export class ApiError extends Error {
    constructor(
        readonly status: number,
        readonly code: string,
        message: string,
    ) {
        super(message);
    }
}
