import { createConsole } from "./app.js";

// Served by the orchestrator under /console, so the API base is the origin.
const base = window.location.origin;
const console_ = createConsole(document, { base });
console_.start();
