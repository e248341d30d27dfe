"""CLI package."""