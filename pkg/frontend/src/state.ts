/** Fader state, generation history, and the one-in-flight request rule. */

import { ApiError, AttributeMap, FaderLabClient, ModelInfo } from "./api.js";

export type FaderState = {
    modelId: string;
    attribute: string;
    target: number;
    w: number;
    steps: number;
    count: number;
    seed: number | null; // null = let the server roll one
};

export type GenerationCard = {
    readonly index: number;
    readonly request: Readonly<FaderState>;
    readonly seed: number;
    readonly sequences: ReadonlyArray<readonly number[]>;
    readonly measured: ReadonlyArray<Readonly<AttributeMap>>;
    readonly generationIds: readonly string[];
    readonly elapsedMs: number;
    readonly createdAt: number;
};

export const MAX_COUNT = 256;

/** Keep a fader value inside the range the server advertised. */
export function clampTarget(model: ModelInfo, value: number): number {
    const [lo, hi] = model.range;
    if (!Number.isFinite(value)) return lo;
    return Math.min(Math.max(value, lo), hi);
}

/** Initial controls for a model: server defaults, fader at the mean. */
export function defaultFaderState(model: ModelInfo): FaderState {
    return {
        modelId: model.id,
        attribute: model.attribute,
        target: clampTarget(model, model.stats.mean),
        w: model.defaults.w,
        steps: model.defaults.steps,
        count: 1,
        seed: null,
    };
}

function freezeCard(card: GenerationCard): GenerationCard {
    Object.freeze(card.request);
    for (const seq of card.sequences) Object.freeze(seq);
    Object.freeze(card.sequences);
    for (const attrs of card.measured) Object.freeze(attrs);
    Object.freeze(card.measured);
    Object.freeze(card.generationIds);
    return Object.freeze(card);
}

export class Session {
    fader: FaderState;
    private cards: GenerationCard[] = [];
    private inFlight = false;
    private errorMessage: string | null = null;

    constructor(
        private readonly client: FaderLabClient,
        readonly models: ModelInfo[],
    ) {
        if (models.length === 0) {
            throw new Error("service advertises no conditional models");
        }
        this.fader = defaultFaderState(models[0]);
    }

    get history(): readonly GenerationCard[] {
        return this.cards;
    }

    get pending(): boolean {
        return this.inFlight;
    }

    get lastError(): string | null {
        return this.errorMessage;
    }

    model(id: string): ModelInfo {
        const found = this.models.find((m) => m.id === id);
        if (found === undefined) throw new Error(`unknown model ${id}`);
        return found;
    }

    get activeModel(): ModelInfo {
        return this.model(this.fader.modelId);
    }

    selectModel(id: string): void {
        const model = this.model(id);
        this.fader = {
            ...this.fader,
            modelId: model.id,
            attribute: model.attribute,
            target: clampTarget(model, this.fader.target),
            w: model.defaults.w,
            steps: model.defaults.steps,
        };
    }

    setTarget(value: number): void {
        this.fader = { ...this.fader, target: clampTarget(this.activeModel, value) };
    }

    setGuidance(w: number): void {
        this.fader = { ...this.fader, w: Math.max(0, w) };
    }

    setSteps(steps: number): void {
        this.fader = { ...this.fader, steps: Math.max(1, Math.round(steps)) };
    }

    setCount(count: number): void {
        this.fader = {
            ...this.fader,
            count: Math.min(Math.max(1, Math.round(count)), MAX_COUNT),
        };
    }

    setSeed(seed: number | null): void {
        this.fader = { ...this.fader, seed };
    }

    /** Run one generation; concurrent calls while pending are refused.
     *  On failure the fader state is untouched and the error is kept
     *  for inline display. */
    async generate(): Promise<GenerationCard | null> {
        if (this.inFlight) return null;
        this.inFlight = true;
        this.errorMessage = null;
        const request: FaderState = { ...this.fader };
        try {
            const response = await this.client.generate({
                modelId: request.modelId,
                target: request.target,
                w: request.w,
                steps: request.steps,
                count: request.count,
                seed: request.seed,
            });
            const card = freezeCard({
                index: this.cards.length,
                request,
                seed: response.seed,
                sequences: response.sequences,
                measured: response.measured_attributes,
                generationIds: response.generation_ids,
                elapsedMs: response.elapsed_ms,
                createdAt: Date.now(),
            });
            this.cards = [...this.cards, card];
            return card;
        } catch (err) {
            this.errorMessage = err instanceof ApiError
                ? err.message
                : `generation failed: ${String(err)}`;
            return null;
        } finally {
            this.inFlight = false;
        }
    }
}
