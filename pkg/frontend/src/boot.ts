/** Browser entry point: reads the API origin, mounts the app. */

import { FaderLabClient } from "./api.js";
import { initApp } from "./main.js";

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app element");

// Same-origin by default; ?api=http://host:port points elsewhere
// (the service allows cross-origin requests).
const override = new URLSearchParams(window.location.search).get("api");
const client = new FaderLabClient(override ?? "");

const AudioCtor = window.AudioContext
    ?? (window as unknown as { webkitAudioContext?: typeof AudioContext }).webkitAudioContext;
const audio = AudioCtor === undefined ? null : new AudioCtor();

initApp(root, client, audio).catch((err) => {
    root.replaceChildren();
    const banner = document.createElement("div");
    banner.className = "error";
    banner.textContent = `could not reach the generation service: ${String(err)}`;
    root.append(banner);
});
