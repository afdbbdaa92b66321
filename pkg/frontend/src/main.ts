import { ApiClient } from "./api.js";
import { ConsoleApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const bankUrl = params.get("bank") ?? "http://127.0.0.1:8470";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
new ConsoleApp(root, new ApiClient(bankUrl));
