# tests package