/** DOM wiring: fader panel, generate flow, and the history of cards. */

import { FaderLabClient, ModelInfo } from "./api.js";
import { renderPianoRoll, TokenError } from "./pianoRoll.js";
import { StepPlayer, ToneContext } from "./player.js";
import { GenerationCard, Session } from "./state.js";

const ATTRIBUTE_LABELS: Record<string, string> = {
    contour: "Contour",
    note_density: "Note density",
    pitch_range: "Pitch range",
    rhythm_complexity: "Rhythm complexity",
};

function label(attribute: string): string {
    return ATTRIBUTE_LABELS[attribute] ?? attribute.replace(/_/g, " ");
}

type Attrs = Record<string, string>;

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    attrs: Attrs = {},
    children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) {
        node.setAttribute(key, value);
    }
    for (const child of children) {
        node.append(child);
    }
    return node;
}

function fmt(value: number, digits = 3): string {
    return Number.isFinite(value) ? value.toFixed(digits) : String(value);
}

export type App = {
    session: Session;
    root: HTMLElement;
    refresh: () => void;
};

/** Build the app inside `root`. The audio context is optional so the
 *  UI still works (with playback disabled) where WebAudio is missing. */
export async function initApp(
    root: HTMLElement,
    client: FaderLabClient,
    audio: ToneContext | null = null,
): Promise<App> {
    const models = await client.listModels();
    const session = new Session(client, models);
    const player = audio === null ? null : new StepPlayer(audio);

    const modelSelect = el("select", { "data-role": "model-select" });
    for (const model of models) {
        modelSelect.append(el("option", { value: model.id }, [
            `${label(model.attribute)} (${model.kind})`,
        ]));
    }

    const fader = el("input", { type: "range", "data-role": "fader" });
    const faderReadout = el("span", { class: "readout", "data-role": "fader-value" });
    const guidance = el("input", {
        type: "number", step: "0.5", min: "0", "data-role": "guidance",
    });
    const steps = el("input", { type: "number", min: "1", "data-role": "steps" });
    const count = el("input", {
        type: "number", min: "1", max: "256", "data-role": "count",
    });
    const seedLock = el("input", { type: "checkbox", "data-role": "seed-lock" });
    const seedInput = el("input", {
        type: "number", disabled: "", "data-role": "seed",
    });
    const generateBtn = el("button", { "data-role": "generate" }, ["Generate"]);
    const errorLine = el("div", { class: "error", "data-role": "error", hidden: "" });
    const historyHost = el("div", { class: "history", "data-role": "history" });

    function applyModelBounds(model: ModelInfo): void {
        const [lo, hi] = model.range;
        fader.min = String(lo);
        fader.max = String(hi);
        fader.step = String((hi - lo) / 200 || 1);
        guidance.disabled = !model.supports_guidance;
        steps.disabled = !model.supports_guidance;
    }

    function syncControls(): void {
        const state = session.fader;
        modelSelect.value = state.modelId;
        applyModelBounds(session.activeModel);
        fader.value = String(state.target);
        faderReadout.textContent = fmt(state.target);
        guidance.value = String(state.w);
        steps.value = String(state.steps);
        count.value = String(state.count);
        seedLock.checked = state.seed !== null;
        seedInput.disabled = state.seed === null;
        if (state.seed !== null) seedInput.value = String(state.seed);
        generateBtn.disabled = session.pending;
        errorLine.hidden = session.lastError === null;
        errorLine.textContent = session.lastError ?? "";
    }

    modelSelect.addEventListener("change", () => {
        session.selectModel(modelSelect.value);
        syncControls();
    });
    fader.addEventListener("input", () => {
        session.setTarget(Number(fader.value));
        syncControls();
    });
    guidance.addEventListener("change", () => {
        session.setGuidance(Number(guidance.value));
        syncControls();
    });
    steps.addEventListener("change", () => {
        session.setSteps(Number(steps.value));
        syncControls();
    });
    count.addEventListener("change", () => {
        session.setCount(Number(count.value));
        syncControls();
    });
    seedLock.addEventListener("change", () => {
        if (seedLock.checked) {
            const parsed = Number(seedInput.value);
            session.setSeed(Number.isFinite(parsed) ? Math.trunc(parsed) : 0);
        } else {
            session.setSeed(null);
        }
        syncControls();
    });
    seedInput.addEventListener("change", () => {
        if (seedLock.checked) {
            session.setSeed(Math.trunc(Number(seedInput.value)) || 0);
            syncControls();
        }
    });

    function sequenceBlock(card: GenerationCard, index: number): HTMLElement {
        const block = el("div", { class: "sequence", "data-role": "sequence" });
        const canvas = el("canvas", {
            width: "512", height: "160", "data-role": "roll",
        });
        try {
            renderPianoRoll(canvas, card.sequences[index] as number[]);
            block.append(canvas);
        } catch (err) {
            if (!(err instanceof TokenError)) throw err;
            block.append(el("span", { class: "badge", "data-role": "token-error" }, [
                `malformed tokens: ${err.message}`,
            ]));
        }
        const attrs = card.measured[index];
        const measured = attrs[card.request.attribute];
        const delta = measured - card.request.target;
        const line = el("div", { class: "measured", "data-role": "measured" }, [
            Object.entries(attrs)
                .map(([name, value]) => `${label(name)} ${fmt(value)}`)
                .join(" · "),
        ]);
        const deltaLine = el("div", { class: "delta", "data-role": "delta" }, [
            `${label(card.request.attribute)}: target ${fmt(card.request.target)}, ` +
            `measured ${fmt(measured)} (Δ ${delta >= 0 ? "+" : ""}${fmt(delta)})`,
        ]);
        const actions = el("div", { class: "actions" });
        const playBtn = el("button", { "data-role": "play" }, ["Play"]);
        if (player === null) {
            playBtn.disabled = true;
            playBtn.title = "audio unavailable";
        } else {
            playBtn.addEventListener("click", () => {
                player.play(card.sequences[index] as number[]);
            });
        }
        const midiLink = el("a", {
            href: client.midiUrl(card.generationIds[index]),
            download: `${card.generationIds[index]}.mid`,
            "data-role": "midi-link",
        }, ["MIDI"]);
        actions.append(playBtn, midiLink);
        block.append(deltaLine, line, actions);
        return block;
    }

    function appendCard(card: GenerationCard): void {
        const node = el("article", { class: "card", "data-role": "card" });
        const when = new Date(card.createdAt).toLocaleTimeString();
        const reuseSeed = el("button", { "data-role": "reuse-seed" }, ["Lock seed"]);
        reuseSeed.addEventListener("click", () => {
            session.setSeed(card.seed);
            seedInput.value = String(card.seed);
            syncControls();
        });
        node.append(
            el("header", {}, [
                el("strong", {}, [`#${card.index + 1} ${label(card.request.attribute)}`]),
                el("span", { class: "meta", "data-role": "card-meta" }, [
                    ` target ${fmt(card.request.target)} · w ${card.request.w} · ` +
                    `steps ${card.request.steps} · seed ${card.seed} · ${when}`,
                ]),
                reuseSeed,
            ]),
        );
        for (let index = 0; index < card.sequences.length; index++) {
            node.append(sequenceBlock(card, index));
        }
        historyHost.prepend(node);
    }

    generateBtn.addEventListener("click", () => {
        void runGenerate();
    });

    async function runGenerate(): Promise<void> {
        if (session.pending) return;
        syncControls();
        generateBtn.disabled = true;
        const card = await session.generate();
        if (card !== null) appendCard(card);
        syncControls();
    }

    const controls = el("section", { class: "controls" }, [
        el("div", { class: "row" }, [el("label", {}, ["Model "]), modelSelect]),
        el("div", { class: "row" }, [
            el("label", {}, ["Target "]), fader, faderReadout,
        ]),
        el("div", { class: "row" }, [
            el("label", {}, ["Guidance w "]), guidance,
            el("label", {}, [" Steps "]), steps,
            el("label", {}, [" Count "]), count,
        ]),
        el("div", { class: "row" }, [
            el("label", {}, ["Lock seed "]), seedLock, seedInput,
        ]),
        el("div", { class: "row" }, [generateBtn]),
        errorLine,
    ]);

    root.append(
        el("h1", {}, ["faderlab"]),
        controls,
        historyHost,
    );
    syncControls();

    return { session, root, refresh: syncControls };
}
