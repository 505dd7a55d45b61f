import { ApiClient } from "./api.js";
import { DiagnosisConsole } from "./app.js";

const baseUrl = (window as Window & { DERMDX_BASE_URL?: string }).DERMDX_BASE_URL ?? "";
const app = new DiagnosisConsole(document, new ApiClient(baseUrl));
void app.init();
