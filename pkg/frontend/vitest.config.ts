import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    testTimeout: 60_000,
    hookTimeout: 60_000,
    // The journey spec drives one shared live server; keep files sequential.
    fileParallelism: false,
  },
});
