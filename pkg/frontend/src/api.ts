/** Typed client for the faderlab generation service. */

export type AttributeMap = Record<string, number>;

export type AttributeStats = {
    mean: number;
    std: number;
    min: number;
    max: number;
    p99: number;
};

export type ModelInfo = {
    id: string;
    kind: string;
    attribute: string;
    range: [number, number];
    stats: AttributeStats;
    defaults: { w: number; steps: number };
    supports_guidance: boolean;
};

export type GenerateParams = {
    modelId: string;
    target: number;
    w: number;
    steps: number;
    count: number;
    seed: number | null;
};

export type GenerateResponse = {
    model_id: string;
    attribute: string;
    target: number;
    w: number;
    steps: number;
    seed: number;
    sequences: number[][];
    measured_attributes: AttributeMap[];
    generation_ids: string[];
    elapsed_ms: number;
};

type FieldError = { field: string; message: string };

export class ApiError extends Error {
    constructor(public readonly status: number, message: string) {
        super(message);
        this.name = "ApiError";
    }
}

function describeDetail(detail: unknown): string {
    if (typeof detail === "string") return detail;
    if (Array.isArray(detail)) {
        return (detail as FieldError[])
            .map((err) => `${err.field}: ${err.message}`)
            .join("; ");
    }
    return JSON.stringify(detail);
}

export class FaderLabClient {
    constructor(
        private readonly baseUrl: string = "",
        private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
    ) {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        let response: Response;
        try {
            response = await this.fetchFn(this.baseUrl + path, init);
        } catch (err) {
            throw new ApiError(0, `service unreachable: ${String(err)}`);
        }
        let body: unknown = null;
        try {
            body = await response.json();
        } catch {
            // non-JSON body; fall through with the status line only
        }
        if (!response.ok) {
            const detail = (body as { detail?: unknown } | null)?.detail;
            const message = detail !== undefined
                ? describeDetail(detail)
                : `HTTP ${response.status}`;
            throw new ApiError(response.status, message);
        }
        return body as T;
    }

    async listModels(): Promise<ModelInfo[]> {
        const body = await this.request<{ models: ModelInfo[] }>("/api/models");
        return body.models;
    }

    async generate(params: GenerateParams): Promise<GenerateResponse> {
        const payload: Record<string, unknown> = {
            model_id: params.modelId,
            target: params.target,
            w: params.w,
            steps: params.steps,
            count: params.count,
        };
        if (params.seed !== null) payload.seed = params.seed;
        return this.request<GenerateResponse>("/api/generate", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
        });
    }

    async measureAttributes(tokens: number[]): Promise<AttributeMap> {
        const body = await this.request<{ attributes: AttributeMap }>(
            "/api/attributes",
            {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify({ tokens }),
            },
        );
        return body.attributes;
    }

    midiUrl(genId: string): string {
        return `${this.baseUrl}/api/generate/${genId}/midi`;
    }
}
