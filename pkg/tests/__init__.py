# lipspline test suite
