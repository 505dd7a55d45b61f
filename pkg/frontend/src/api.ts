import {
    ApiError,
    ApiErrorBody,
    ClassesResponse,
    DiagnoseControls,
    DiagnosisResult,
    HealthResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function throwApiError(response: Response): Promise<never> {
    let code = "unknown_error";
    let message = `request failed with status ${response.status}`;
    try {
        const body = (await response.json()) as ApiErrorBody;
        if (body && body.error) {
            code = body.error.code;
            message = body.error.message;
        }
    } catch {
        // non-JSON error body: keep the generic message
    }
    throw new ApiError(response.status, code, message);
}

export class ApiClient {
    constructor(
        private readonly baseUrl: string = "",
        private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    ) {}

    private async getJson<T>(path: string): Promise<T> {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`);
        if (!response.ok) {
            await throwApiError(response);
        }
        return (await response.json()) as T;
    }

    health(): Promise<HealthResponse> {
        return this.getJson<HealthResponse>("/v1/health");
    }

    classes(): Promise<ClassesResponse> {
        return this.getJson<ClassesResponse>("/v1/classes");
    }

    async diagnose(image: Blob, narrative: string, controls: DiagnoseControls): Promise<DiagnosisResult> {
        const form = new FormData();
        form.append("image", image, image instanceof File ? image.name : "upload.png");
        form.append("narrative", narrative);
        form.append("top_n", String(controls.topN));
        form.append("mode", controls.mode);
        if (controls.mode === "chain") {
            form.append("k", String(controls.k));
        }
        const response = await this.fetchImpl(`${this.baseUrl}/v1/diagnose`, {
            method: "POST",
            body: form,
        });
        if (!response.ok) {
            await throwApiError(response);
        }
        return (await response.json()) as DiagnosisResult;
    }
}
