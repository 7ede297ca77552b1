import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'node',
    include: ['test/**/*.test.ts'],
    // The e2e test boots the real pipeline server and drives a full mock
    // run through it; give it room beyond the unit-test default.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
