/** Browser playback of token windows: 120 BPM sixteenth-note steps,
 *  one plain oscillator tone per note. */

import { tokensToBars } from "./pianoRoll.js";

export const BPM = 120;
export const STEP_SECONDS = 60 / BPM / 4; // sixteenth notes
const GAIN = 0.18;
const RELEASE = 0.03;

export function pitchToHz(pitch: number): number {
    return 440 * Math.pow(2, (pitch - 69) / 12);
}

/** The WebAudio surface the player touches; tests supply a fake. */
export interface ToneContext {
    currentTime: number;
    destination: AudioNode;
    createOscillator(): OscillatorNode;
    createGain(): GainNode;
}

type ActiveVoice = { osc: OscillatorNode; gain: GainNode };

export class StepPlayer {
    private voices: ActiveVoice[] = [];

    constructor(private readonly ctx: ToneContext) {}

    /** Schedule all notes of a window; any playback in progress stops. */
    play(tokens: ArrayLike<number>): void {
        this.stop();
        const bars = tokensToBars(tokens);
        const base = this.ctx.currentTime;
        for (const bar of bars) {
            const start = base + bar.start * STEP_SECONDS;
            const end = base + (bar.start + bar.length) * STEP_SECONDS;
            const osc = this.ctx.createOscillator();
            osc.type = "triangle";
            osc.frequency.value = pitchToHz(bar.pitch);
            const gain = this.ctx.createGain();
            gain.gain.setValueAtTime(GAIN, start);
            gain.gain.setTargetAtTime(0, end - RELEASE, RELEASE / 4);
            osc.connect(gain);
            gain.connect(this.ctx.destination);
            osc.start(start);
            osc.stop(end);
            this.voices.push({ osc, gain });
        }
    }

    stop(): void {
        for (const voice of this.voices) {
            try {
                voice.osc.stop();
            } catch {
                // already stopped or never started; nothing to unwind
            }
            voice.osc.disconnect();
            voice.gain.disconnect();
        }
        this.voices = [];
    }

    get playing(): boolean {
        return this.voices.length > 0;
    }
}
