import { defineConfig } from 'vitest/config'

export default defineConfig({
  test: {
    // several tests shell out to the core Python package, whose import alone
    // takes a few seconds
    testTimeout: 60_000,
  },
})
